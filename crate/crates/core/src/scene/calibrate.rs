use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scene::{sample_target, ReturnSimulator, TargetTruth};
use crate::stap::{mean_output_scnr, output_scnr, CovarianceEstimate};

/// Mean output SCNR (dB) of `n_cal` examples whose RCS follows the
/// scenario's distribution rescaled to unit mean.
pub fn measure_unit_scnr(
    sim: &ReturnSimulator,
    covs: &[CovarianceEstimate],
    n_cal: usize,
    rng_seed: u64,
) -> Result<f64> {
    let s = sim.scenario();
    let k = s.config.num_realizations;
    let mean = if s.config.rcs_mean > 0.0 { s.config.rcs_mean } else { 1.0 };
    let mut values = Vec::with_capacity(n_cal);
    for i in 0..n_cal {
        let seed = derive_seed(rng_seed, i as u64);
        let t = sample_target(s, derive_seed(seed, 1));
        let unit = TargetTruth { rcs: t.rcs / mean, ..t };
        let offset = unit.bin_offset(s);
        let bins = sim.simulate(Some(&unit), k, derive_seed(seed, 2))?;
        let b = &bins[offset];
        let db = output_scnr(&b.x, &b.c, &b.n, &covs[offset])
            .map_err(|e| Error::Calibration(format!("example {i}: {e}")))?;
        values.push(db);
    }
    mean_output_scnr(&values)
}

/// Factor on the RCS distribution that brings the mean output SCNR to
/// `target_db`. Output SCNR is linear in RCS, so one measurement at unit
/// mean fixes the scale.
pub fn rcs_for_target(unit_scnr_db: f64, target_db: f64) -> f64 {
    10f64.powf((target_db - unit_scnr_db) / 10.0)
}

pub fn calibrate_rcs(
    sim: &ReturnSimulator,
    covs: &[CovarianceEstimate],
    target_mean_scnr_db: f64,
    n_cal: usize,
    rng_seed: u64,
) -> Result<f64> {
    if n_cal < 32 {
        return Err(Error::argument("calibration needs at least 32 examples"));
    }
    let cfg = &sim.scenario().config;
    if cfg.noise_power == 0.0 && sim.bins().iter().all(|b| b.patch_count == 0) {
        return Err(Error::Calibration("scene has neither clutter nor noise".into()));
    }
    let unit = measure_unit_scnr(sim, covs, n_cal, rng_seed)?;
    Ok(rcs_for_target(unit, target_mean_scnr_db))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_power_scaling() {
        assert_eq!(rcs_for_target(-3.5, -3.5), 1.0);
        assert!((rcs_for_target(-3.5, 6.5) - 10.0).abs() < 1e-12);
    }
}
