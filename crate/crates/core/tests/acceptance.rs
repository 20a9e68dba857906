//! End-to-end acceptance checks. Each check prints one `PASS` or `FAIL`
//! line; the test fails at the end if any check failed.
//!
//! The full desk-scale experiment runs once and feeds the matched-gain,
//! rank-correlation, fine-tuning and degradation checks.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::Rng;
use staploc_core::harness::{chordal_csv, errors_csv, run_experiment, ExperimentConfig, ExperimentReport};
use staploc_core::linalg::{CMatrix, CVector, C64};
use staploc_core::neural::{check_gradients, Activations, Architecture, CnnModel};
use staploc_core::rng::{complex_gaussian, seeded};
use staploc_core::scene::ScenarioTag;
use staploc_core::stap::{namf_statistic, CovarianceEstimate};
use staploc_core::subspace::{chordal_distance, principal_angles, SubspaceBasis};

// Written straight to stdout so the lines show up without `--nocapture`.
macro_rules! say {
    ($($arg:tt)*) => {{
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, $($arg)*);
        let _ = out.flush();
    }};
}

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
}

impl Outcome {
    fn print(&self) {
        say!(
            "[{}] criterion {} {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        );
    }
}

fn timed(id: u32, name: &'static str, budget: Duration, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (ok, detail) = f();
    let elapsed = start.elapsed();
    let within = elapsed <= budget;
    let detail = if within {
        detail
    } else {
        format!("{detail}; over the {:.0} s budget", budget.as_secs_f64())
    };
    let out = Outcome {
        id,
        name,
        passed: ok && within,
        detail,
        elapsed,
    };
    out.print();
    out
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, 1.0))
}

fn namf_properties() -> (bool, String) {
    let (l, k) = (16, 100);
    let mut rng = seeded(101);
    let bound = (k as f64).sqrt();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut worst_invariance = 0.0f64;
    for _ in 0..10_000 {
        let y = gaussian_matrix(l, k, &mut rng);
        let a = CVector::from_fn(l, |_, _| complex_gaussian(&mut rng, 1.0));
        let g = namf_statistic(&y, &a).unwrap();
        lo = lo.min(g);
        hi = hi.max(g);
        let s = rng.random_range(0.01..100.0);
        let phase = C64::from_polar(rng.random_range(0.5..2.0), rng.random_range(0.0..6.28));
        let scaled = namf_statistic(&y.scale(s), &(&a * phase)).unwrap();
        worst_invariance = worst_invariance.max((scaled - g).abs() / g.max(1e-300));
    }
    let a = CVector::from_fn(l, |_, _| complex_gaussian(&mut rng, 1.0));
    let y = CMatrix::from_column_slice(l, 1, (&a * C64::new(0.3, -1.7)).as_slice());
    let matched = namf_statistic(&y, &a).unwrap();
    let ok = lo >= 0.0 && hi <= bound && (matched - 1.0).abs() <= 1e-9 && worst_invariance <= 1e-10;
    (
        ok,
        format!("range [{lo:.3e}, {hi:.3}] vs bound {bound}, matched {matched:.12}, invariance {worst_invariance:.1e}"),
    )
}

fn whitening() -> (bool, String) {
    let l = 16;
    let mut rng = seeded(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = gaussian_matrix(l, l, &mut rng);
        let sigma = &a * a.adjoint() + CMatrix::identity(l, l).scale(rng.random_range(1e-3..1.0));
        let est = CovarianceEstimate::from_matrix(sigma, 0.0).unwrap();
        let w = &est.inv_sqrt * &est.sigma * &est.inv_sqrt;
        worst = worst.max((w - CMatrix::identity(l, l)).norm());
    }
    (worst < 1e-8, format!("worst Frobenius defect {worst:.2e} over 100 matrices"))
}

fn chordal_oracle() -> (bool, String) {
    let l = 16;
    let mut rng = seeded(303);
    let mut worst = 0.0f64;
    let mut worst_extreme = 0.0f64;
    for _ in 0..1000 {
        let r = rng.random_range(1..=8);
        let qa = gaussian_matrix(l, l, &mut rng).qr().q();
        let qb = gaussian_matrix(l, l, &mut rng).qr().q();
        let ua = qa.columns(0, r).into_owned();
        let ub = qb.columns(0, r).into_owned();
        let a = SubspaceBasis::from_orthonormal(ua.clone()).unwrap();
        let b = SubspaceBasis::from_orthonormal(ub.clone()).unwrap();
        let d = chordal_distance(&a, &b, r).unwrap().distance;
        let sines: f64 = principal_angles(&ua, &ub).iter().map(|t| t.sin().powi(2)).sum();
        worst = worst.max((d - sines).abs());

        let orth = SubspaceBasis::from_orthonormal(qa.columns(r, r).into_owned()).unwrap();
        let d_orth = chordal_distance(&a, &orth, r).unwrap().distance;
        let d_same = chordal_distance(&a, &a, r).unwrap().distance;
        worst_extreme = worst_extreme.max((d_orth - r as f64).abs()).max(d_same.abs());
    }
    (
        worst < 1e-8 && worst_extreme < 1e-8,
        format!("max |distance - sum sin^2| {worst:.1e}, orthogonal/identical defect {worst_extreme:.1e}"),
    )
}

fn gradient_exactness() -> (bool, String) {
    let shape = (5, 26, 21);
    let model = CnnModel::<f64>::new(shape, Architecture::default(), 404).unwrap();
    let mut rng = seeded(405);
    let mut x = Activations::zeros(4, shape.0, shape.1, shape.2);
    x.data.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
    let labels: Vec<[f64; 3]> = (0..4).map(|_| [0; 3].map(|_| rng.random_range(-0.9..0.9))).collect();
    let report = check_gradients(&model, &x, &labels, 1e-5, 24, 406).unwrap();
    let worst = report.iter().fold(0.0f64, |m, r| m.max(r.max_rel_error));
    let failing: Vec<String> = report
        .iter()
        .filter(|r| !(r.max_rel_error < 1e-4))
        .map(|r| format!("layer {} {} tensor {}: {:.2e}", r.layer, r.kind, r.tensor, r.max_rel_error))
        .collect();
    let layers: std::collections::BTreeSet<usize> = report.iter().map(|r| r.layer).collect();
    (
        failing.is_empty() && layers.len() == 8,
        format!(
            "{} tensors over {} parameterized layers, worst relative error {worst:.2e}{}",
            report.len(),
            layers.len(),
            if failing.is_empty() { String::new() } else { format!("; failing: {}", failing.join(", ")) }
        ),
    )
}

fn matched_gain(report: &ExperimentReport) -> (bool, String) {
    match report.row(ScenarioTag::O.as_str(), 20.0) {
        Some(r) => (
            r.gain > 1.0,
            format!("20 dB matched: cell midpoint {:.2} m, CNN {:.2} m, gain {:.3}", r.err_namf_m, r.err_cnn_m, r.gain),
        ),
        None => (false, "no matched row at 20 dB".into()),
    }
}

fn rank_correlation(report: &ExperimentReport) -> (bool, String) {
    let pairs: Vec<String> = report
        .chordal
        .iter()
        .map(|c| format!("{} {:.3}/{:.3}", c.scenario, c.distance_raw, c.gain_at_top_scnr))
        .collect();
    match report.spearman {
        Some(rho) => (
            rho <= -0.6,
            format!("spearman {rho:.3} at {} dB (distance/gain: {})", report.top_scnr_db, pairs.join(", ")),
        ),
        None => (false, "spearman undefined".into()),
    }
}

fn fine_tuning(report: &ExperimentReport) -> (bool, String) {
    let (improved, total) = report.fsl_improvements();
    let change = report.matched_fsl_change().unwrap_or(f64::INFINITY);
    let top: Vec<_> = report
        .errors
        .iter()
        .filter(|r| r.scnr_db == report.top_scnr_db && r.scenario != ScenarioTag::O.as_str())
        .collect();
    let ratio = top.iter().map(|r| r.gain_fsl / r.gain).sum::<f64>() / top.len().max(1) as f64;
    (
        total == 8 && improved >= 7 && change <= 0.10,
        format!(
            "gain improved on {improved} of {total}; matched error change {:+.1}%; mean gain ratio {ratio:.2}",
            100.0 * change
        ),
    )
}

fn degradation(report: &ExperimentReport) -> (bool, String) {
    let mut worst = f64::INFINITY;
    let mut worst_at = String::new();
    let mut missing = false;
    for tag in std::iter::once(ScenarioTag::O).chain(ScenarioTag::DISPLACED) {
        let (Some(lo), Some(hi)) = (report.row(tag.as_str(), -20.0), report.row(tag.as_str(), 20.0)) else {
            missing = true;
            continue;
        };
        for (name, a, b) in [
            ("cell midpoint", lo.err_namf_m, hi.err_namf_m),
            ("CNN", lo.err_cnn_m, hi.err_cnn_m),
            ("CNN+FSL", lo.err_cnn_fsl_m, hi.err_cnn_fsl_m),
        ] {
            if a / b < worst {
                worst = a / b;
                worst_at = format!("{tag} {name}");
            }
        }
    }
    (
        !missing && worst >= 3.0,
        format!("smallest AED(-20 dB)/AED(+20 dB) ratio {worst:.2} ({worst_at})"),
    )
}

fn reduced_config() -> ExperimentConfig {
    let pairs = [
        ("displacements.directions", "N, E, SW"),
        ("experiment.scnr_db", "0, 20"),
        ("experiment.train_count", "256"),
        ("experiment.test_count", "64"),
        ("experiment.fsl_count", "16"),
        ("experiment.calibration_count", "64"),
        ("train.epochs", "3"),
        ("fsl.epochs", "5"),
    ];
    let o: Vec<(String, String)> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    ExperimentConfig::load(None, &o).unwrap()
}

fn determinism() -> (bool, String) {
    let cfg = reduced_config();
    let csvs = |r: &ExperimentReport| (errors_csv(&r.errors).unwrap(), chordal_csv(&r.chordal).unwrap());
    let a = csvs(&run_experiment(&cfg).unwrap());
    let b = csvs(&run_experiment(&cfg).unwrap());
    let other = {
        let mut c = cfg.clone();
        c.seed += 1;
        csvs(&run_experiment(&c).unwrap())
    };
    (
        a == b && a.0 != other.0,
        format!(
            "errors.csv {} bytes, chordal.csv {} bytes: {}; a different seed {}",
            a.0.len(),
            a.1.len(),
            if a == b { "identical across runs" } else { "runs differ" },
            if a.0 != other.0 { "changes the errors" } else { "gives identical errors" }
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let mut outcomes = vec![
        timed(1, "NAMF properties", Duration::from_secs(10), namf_properties),
        timed(2, "whitening", Duration::from_secs(5), whitening),
        timed(3, "chordal oracle", Duration::from_secs(10), chordal_oracle),
        timed(4, "gradient exactness", Duration::from_secs(60), gradient_exactness),
    ];

    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let report = run_experiment(&cfg).expect("desk-scale experiment runs");
    let full = start.elapsed();
    say!("desk-scale experiment finished in {:.1} min", full.as_secs_f64() / 60.0);
    for line in staploc_core::harness::summary_text(&report).lines() {
        say!("    {line}");
    }

    let budget_45 = full <= Duration::from_secs(45 * 60);
    let with_budget = |o: Outcome, budget_ok: bool, limit: &str| {
        let o = if budget_ok {
            o
        } else {
            Outcome {
                passed: false,
                detail: format!("{}; experiment took longer than {limit}", o.detail),
                ..o
            }
        };
        o.print();
        o
    };
    let from_report = |id, name, f: fn(&ExperimentReport) -> (bool, String)| {
        let (passed, detail) = f(&report);
        Outcome {
            id,
            name,
            passed,
            detail,
            elapsed: full,
        }
    };
    // The matched model at 20 dB is one of nine trained during the sweep.
    let per_point = full / cfg.scnr_db.len() as u32;
    outcomes.push(with_budget(
        from_report(5, "matched-case gain", matched_gain),
        per_point <= Duration::from_secs(20 * 60),
        "20 min per SCNR point",
    ));
    outcomes.push(with_budget(from_report(6, "chordal distance predicts gain", rank_correlation), budget_45, "45 min"));
    outcomes.push(with_budget(from_report(7, "few-shot improvement", fine_tuning), true, ""));
    outcomes.push(timed(8, "determinism", Duration::from_secs(15 * 60), determinism));
    outcomes.push(with_budget(from_report(9, "degradation shape", degradation), true, ""));

    say!();
    outcomes.sort_by_key(|o| o.id);
    for o in &outcomes {
        o.print();
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
