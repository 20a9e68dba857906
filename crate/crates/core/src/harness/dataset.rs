use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scene::{measure_unit_scnr, rcs_for_target, sample_target, ReturnSimulator, Scenario};
use crate::stap::{build_heatmap, scenario_covariances, CovarianceEstimate, CovarianceSettings, HeatmapTensor, SteeringGrid, TensorLabel};

/// Per-scenario state shared by every dataset drawn from it: the return
/// simulator, covariance estimates, whitened steering grid and the output
/// SCNR measured at unit mean RCS.
pub struct SceneContext {
    pub scenario: Scenario,
    pub sim: ReturnSimulator,
    pub covariances: Vec<CovarianceEstimate>,
    pub grid: SteeringGrid,
    pub unit_scnr_db: f64,
}

impl SceneContext {
    pub fn new(scenario: &Scenario, settings: &CovarianceSettings, calibration_count: usize, seed: u64) -> Result<Self> {
        if calibration_count < 32 {
            return Err(Error::argument("calibration needs at least 32 examples"));
        }
        let sim = ReturnSimulator::new(scenario);
        let covariances = scenario_covariances(&sim, settings)?;
        let grid = SteeringGrid::new(scenario, &covariances)?;
        let cfg = &scenario.config;
        if cfg.noise_power == 0.0 && sim.bins().iter().all(|b| b.patch_count == 0) {
            return Err(Error::Calibration("scene has neither clutter nor noise".into()));
        }
        let unit_scnr_db = measure_unit_scnr(&sim, &covariances, calibration_count, seed)?;
        if !unit_scnr_db.is_finite() {
            return Err(Error::Calibration(format!("unit-RCS SCNR is {unit_scnr_db}")));
        }
        Ok(Self {
            scenario: scenario.clone(),
            sim,
            covariances,
            grid,
            unit_scnr_db,
        })
    }

    /// `count` heatmaps with the RCS distribution scaled to reach
    /// `target_scnr_db` mean output SCNR. Example `i` depends only on
    /// `(master_seed, i)`.
    pub fn generate(&self, count: usize, target_scnr_db: f64, master_seed: u64) -> Result<Vec<HeatmapTensor>> {
        if count == 0 {
            return Err(Error::argument("dataset count must be at least 1"));
        }
        let scale = rcs_for_target(self.unit_scnr_db, target_scnr_db);
        let mut scaled = self.scenario.clone();
        scaled.config.rcs_mean *= scale;
        scaled.config.rcs_range *= scale;
        let k = scaled.config.num_realizations;
        (0..count)
            .into_par_iter()
            .map(|i| {
                let seed = derive_seed(master_seed, i as u64);
                let truth = sample_target(&scaled, derive_seed(seed, 1));
                let returns = self.sim.simulate(Some(&truth), k, derive_seed(seed, 2))?;
                build_heatmap(&returns, &self.covariances, &self.grid, &truth)
            })
            .collect()
    }
}

/// Builds the scene context and draws one calibrated dataset.
pub fn generate_dataset(
    s: &Scenario,
    count: usize,
    target_scnr_db: f64,
    master_seed: u64,
    settings: &CovarianceSettings,
    calibration_count: usize,
) -> Result<Vec<HeatmapTensor>> {
    let ctx = SceneContext::new(s, settings, calibration_count, derive_seed(master_seed, u64::MAX))?;
    ctx.generate(count, target_scnr_db, master_seed)
}

const MAGIC: &[u8; 8] = b"STAPHMT1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 5 * 4;

/// Serializes tensors: magic `STAPHMT1`, then little-endian u32 version,
/// count, kappa, N_theta, N_phi; then per example the values as f32
/// (bin-major, then azimuth, then elevation), the encoded label (3 x f32),
/// the Cartesian truth in meters (3 x f32), the output SCNR in dB (f32) and
/// the absolute bin index (u32).
pub fn encode_dataset(tensors: &[HeatmapTensor]) -> Result<Vec<u8>> {
    let shape = tensors.first().map(|t| t.shape).unwrap_or([0; 3]);
    if tensors.iter().any(|t| t.shape != shape || t.values.len() != shape.iter().product::<usize>()) {
        return Err(Error::argument("all tensors in a dataset must share one shape"));
    }
    let per = shape.iter().product::<usize>() * 4 + 8 * 4;
    let mut out = Vec::with_capacity(HEADER_LEN + tensors.len() * per);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, tensors.len() as u32, shape[0] as u32, shape[1] as u32, shape[2] as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in tensors {
        for &v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in t.label.encoded.iter().chain(&t.label.position).chain([&t.output_scnr_db]) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&t.label.bin_index.to_le_bytes());
    }
    Ok(out)
}

/// Parses a dataset file. Scenario ids are not stored, so loaded tensors
/// carry an empty id.
pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<HeatmapTensor>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::format(0, "bad magic, not a heatmap dataset"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(8);
    if version != VERSION {
        return Err(Error::format(8, format!("unsupported dataset version {version}")));
    }
    let count = word(12) as usize;
    let shape = [word(16) as usize, word(20) as usize, word(24) as usize];
    let cells: usize = shape.iter().product();
    if count > 0 && cells == 0 {
        return Err(Error::format(16, "zero-sized tensor shape"));
    }
    let per = cells * 4 + 8 * 4;
    let expected = per
        .checked_mul(count)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(12, "dataset size overflows"))?;
    if bytes.len() < expected {
        let whole = (bytes.len() - HEADER_LEN) / per.max(1);
        let offset = HEADER_LEN + whole * per;
        return Err(Error::format(
            offset as u64,
            format!("truncated: example {whole} of {count} is incomplete"),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(expected as u64, "trailing bytes after last example"));
    }
    let real = |at: usize| f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let mut tensors = Vec::with_capacity(count);
    for i in 0..count {
        let base = HEADER_LEN + i * per;
        let values: Vec<f32> = (0..cells).map(|c| real(base + 4 * c)).collect();
        let tail = base + cells * 4;
        let f = |j: usize| real(tail + 4 * j);
        tensors.push(HeatmapTensor {
            shape,
            values,
            label: TensorLabel {
                encoded: [f(0), f(1), f(2)],
                position: [f(3), f(4), f(5)],
                bin_index: word(tail + 28),
            },
            scenario_id: String::new(),
            output_scnr_db: f(6),
        });
    }
    Ok(tensors)
}

pub fn save_dataset(path: &Path, tensors: &[HeatmapTensor]) -> Result<()> {
    fs::write(path, encode_dataset(tensors)?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<HeatmapTensor>> {
    decode_dataset(&fs::read(path)?)
}
