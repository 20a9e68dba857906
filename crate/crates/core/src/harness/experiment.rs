use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::dataset::SceneContext;
use crate::error::{Error, Result};
use crate::localize::{avg_euclidean_error, gain, peak_cell_midpoint, quantization_floor, CartesianPoint, EncodedLabel};
use crate::neural::{freeze_and_finetune, predict, train, CnnModel, TrainConfig};
use crate::rng::derive_seed;
use crate::scene::{build_scenario, displace_platform, Scenario, ScenarioTag};
use crate::stap::HeatmapTensor;
use crate::subspace::pairwise_from_covariances;

/// Localization errors of one scenario at one SCNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub scenario: String,
    pub scnr_db: f64,
    pub err_namf_m: f64,
    pub err_cnn_m: f64,
    pub err_cnn_fsl_m: f64,
    pub gain: f64,
    pub gain_fsl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChordalRow {
    pub scenario: String,
    pub distance_raw: f64,
    pub distance_normalized: f64,
    pub gain_at_top_scnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub errors: Vec<ErrorRow>,
    pub chordal: Vec<ChordalRow>,
    pub top_scnr_db: f64,
    /// Rank correlation between chordal distance and pre-fine-tuning gain
    /// at the top SCNR; `None` with fewer than two displacements.
    pub spearman: Option<f64>,
    /// Mean distance from a uniform point in the central grid cell to its
    /// midpoint: the best possible cell-midpoint error.
    pub quantization_floor_m: f64,
    /// Final-epoch training loss of the network at each SCNR point.
    pub train_loss: Vec<(f64, f64)>,
}

impl ExperimentReport {
    pub fn row(&self, scenario: &str, scnr_db: f64) -> Option<&ErrorRow> {
        self.errors.iter().find(|r| r.scenario == scenario && r.scnr_db == scnr_db)
    }

    /// Displaced scenarios at the top SCNR where fine-tuning raised the gain.
    pub fn fsl_improvements(&self) -> (usize, usize) {
        let rows: Vec<&ErrorRow> = self
            .errors
            .iter()
            .filter(|r| r.scnr_db == self.top_scnr_db && r.scenario != ScenarioTag::O.as_str())
            .collect();
        (rows.iter().filter(|r| r.gain_fsl > r.gain).count(), rows.len())
    }

    /// Relative change of the matched-scenario error caused by fine-tuning
    /// on matched examples, at the top SCNR.
    pub fn matched_fsl_change(&self) -> Option<f64> {
        self.row(ScenarioTag::O.as_str(), self.top_scnr_db)
            .map(|r| r.err_cnn_fsl_m / r.err_cnn_m - 1.0)
    }
}

/// Spearman rank correlation with average ranks for ties; `None` when
/// either side is constant or fewer than two pairs are given.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

// Independent random streams of one experiment.
const STREAM_TRAIN: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_FSL: u64 = 3;
const STREAM_INIT: u64 = 4;
const STREAM_SHUFFLE: u64 = 5;
const STREAM_FSL_SHUFFLE: u64 = 6;
const STREAM_CALIBRATION: u64 = 7;

fn stream(seed: u64, purpose: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(derive_seed(seed, purpose), a), b)
}

/// The original scenario followed by one displacement per configured
/// direction.
pub fn build_scenarios(cfg: &ExperimentConfig) -> Result<Vec<Scenario>> {
    let original = build_scenario(cfg.scenario.clone(), cfg.array.clone(), ScenarioTag::O)?;
    let mut all = vec![original];
    for &tag in &cfg.directions {
        let (e, n) = tag.direction();
        let mut s = displace_platform(&all[0], e * cfg.displacement_m, n * cfg.displacement_m);
        s.tag = tag;
        all.push(s);
    }
    Ok(all)
}

/// Average errors of the classical and network estimates on one test set.
pub fn evaluate(model: &CnnModel<f32>, ctx: &SceneContext, tests: &[HeatmapTensor]) -> Result<(f64, f64)> {
    let truths: Vec<CartesianPoint> = tests
        .iter()
        .map(|t| CartesianPoint::from_array(t.label.position.map(|v| v as f64)))
        .collect();
    let classical: Vec<CartesianPoint> = tests.iter().map(|t| peak_cell_midpoint(t, &ctx.scenario)).collect();
    let network: Vec<CartesianPoint> = predict(model, tests)?
        .into_iter()
        .map(|e| ctx.grid.label_box.decode(&EncodedLabel(e)))
        .collect();
    Ok((avg_euclidean_error(&classical, &truths)?, avg_euclidean_error(&network, &truths)?))
}

struct PointResult {
    rows: Vec<ErrorRow>,
    final_loss: f64,
}

fn run_point(cfg: &ExperimentConfig, contexts: &[SceneContext], j: usize, scnr: f64) -> Result<PointResult> {
    let seed = cfg.seed;
    let j64 = j as u64;
    let stage = |name: &str| format!("{name} at {scnr} dB");
    log::info!("SCNR {scnr} dB: generating data");
    let train_set = contexts[0]
        .generate(cfg.train_count, scnr, stream(seed, STREAM_TRAIN, j64, 0))
        .map_err(|e| e.in_stage(stage("training data")))?;
    let tests: Vec<Vec<HeatmapTensor>> = contexts
        .par_iter()
        .enumerate()
        .map(|(i, ctx)| ctx.generate(cfg.test_count, scnr, stream(seed, STREAM_TEST, j64, i as u64)))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage(stage("test data")))?;
    let fsl_sets: Vec<Vec<HeatmapTensor>> = contexts
        .par_iter()
        .enumerate()
        .map(|(i, ctx)| ctx.generate(cfg.fsl_count, scnr, stream(seed, STREAM_FSL, j64, i as u64)))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage(stage("fine-tuning data")))?;

    log::info!("SCNR {scnr} dB: training on {} examples", train_set.len());
    let k = &cfg.scenario;
    let input = (k.num_bins, k.num_azimuths(), k.num_elevations());
    let mut model = CnnModel::<f32>::new(input, cfg.architecture, stream(seed, STREAM_INIT, j64, 0))
        .map_err(|e| e.in_stage(stage("model")))?;
    let train_cfg = TrainConfig {
        seed: stream(seed, STREAM_SHUFFLE, j64, 0),
        freeze_features: false,
        ..cfg.train.clone()
    };
    let history = train(&mut model, &train_set, &train_cfg).map_err(|e| e.in_stage(stage("training")))?;
    drop(train_set);

    log::info!("SCNR {scnr} dB: evaluating and fine-tuning");
    let rows = contexts
        .par_iter()
        .enumerate()
        .map(|(i, ctx)| -> Result<ErrorRow> {
            let (err_namf, err_cnn) = evaluate(&model, ctx, &tests[i])?;
            let mut tuned = model.clone();
            let fsl_cfg = TrainConfig {
                seed: stream(seed, STREAM_FSL_SHUFFLE, j64, i as u64),
                ..cfg.fsl.clone()
            };
            freeze_and_finetune(&mut tuned, &fsl_sets[i], &fsl_cfg)?;
            let (_, err_fsl) = evaluate(&tuned, ctx, &tests[i])?;
            Ok(ErrorRow {
                scenario: ctx.scenario.tag.to_string(),
                scnr_db: scnr,
                err_namf_m: err_namf,
                err_cnn_m: err_cnn,
                err_cnn_fsl_m: err_fsl,
                gain: gain(err_namf, err_cnn),
                gain_fsl: gain(err_namf, err_fsl),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage(stage("evaluation")))?;
    for r in &rows {
        log::info!(
            "  {:>2} {:>6} dB: namf {:8.2} m  cnn {:8.2} m  fsl {:8.2} m  gain {:.3} -> {:.3}",
            r.scenario,
            r.scnr_db,
            r.err_namf_m,
            r.err_cnn_m,
            r.err_cnn_fsl_m,
            r.gain,
            r.gain_fsl
        );
    }
    Ok(PointResult {
        rows,
        final_loss: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// Quantization floor of the grid cell at the center of the original
/// search region.
pub fn central_quantization_floor(cfg: &ExperimentConfig) -> Result<f64> {
    let c = &cfg.scenario;
    let center_range = 0.5 * (c.range_bounds_m.0 + c.range_bounds_m.1);
    let (az, el) = c.boresight_deg();
    quantization_floor(
        (center_range, az, el),
        (c.range_resolution_m, c.azimuth_resolution_deg, c.elevation_resolution_deg),
        100_000,
        cfg.seed,
    )
}

/// Runs the full transfer study: build the original and displaced scenes,
/// measure their clutter-subspace distances, then for every SCNR point train
/// one network on the original scene, score it and the classical estimator
/// on every scene, and fine-tune it on a few examples of each scene.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let scenarios = build_scenarios(cfg).map_err(|e| e.in_stage("scenarios"))?;
    log::info!("building {} scene contexts", scenarios.len());
    let contexts: Vec<SceneContext> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            SceneContext::new(
                s,
                &cfg.covariance,
                cfg.calibration_count,
                stream(cfg.seed, STREAM_CALIBRATION, i as u64, 0),
            )
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("calibration"))?;

    let displaced: Vec<_> = contexts[1..]
        .iter()
        .map(|c| (c.scenario.tag, c.covariances.clone()))
        .collect();
    let distances = pairwise_from_covariances(&contexts[0].covariances, &displaced, cfg.bin_policy, cfg.rank_rule)
        .map_err(|e| e.in_stage("chordal distance"))?;

    let mut errors = Vec::new();
    let mut train_loss = Vec::new();
    for (j, &scnr) in cfg.scnr_db.iter().enumerate() {
        let point = run_point(cfg, &contexts, j, scnr)?;
        errors.extend(point.rows);
        train_loss.push((scnr, point.final_loss));
    }

    let top = cfg.scnr_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let chordal: Vec<ChordalRow> = distances
        .iter()
        .map(|d| {
            let g = errors
                .iter()
                .find(|r| r.scnr_db == top && r.scenario == d.tag.as_str())
                .map_or(f64::NAN, |r| r.gain);
            ChordalRow {
                scenario: d.tag.to_string(),
                distance_raw: d.distance,
                distance_normalized: d.normalized,
                gain_at_top_scnr: g,
            }
        })
        .collect();
    let xs: Vec<f64> = chordal.iter().map(|c| c.distance_raw).collect();
    let ys: Vec<f64> = chordal.iter().map(|c| c.gain_at_top_scnr).collect();

    let floor = central_quantization_floor(cfg)?;
    if errors.iter().any(|r| !(r.err_namf_m >= 0.0 && r.err_cnn_m >= 0.0 && r.err_cnn_fsl_m >= 0.0)) {
        return Err(Error::Numeric {
            layer: 0,
            kind: "non-finite localization error".into(),
        }
        .in_stage("report"));
    }
    Ok(ExperimentReport {
        errors,
        chordal,
        top_scnr_db: top,
        spearman: spearman(&xs, &ys),
        quantization_floor_m: floor,
        train_loss,
    })
}
