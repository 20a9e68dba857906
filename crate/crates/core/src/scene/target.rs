use rand::Rng;

use crate::localize::{sph_to_cart, CartesianPoint};
use crate::rng::seeded;
use crate::scene::Scenario;

/// Ground truth of a single point target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetTruth {
    pub range_m: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Absolute range bin index of the target.
    pub bin_index: i64,
    pub rcs: f64,
    pub position: CartesianPoint,
}

impl TargetTruth {
    pub fn new(s: &Scenario, range_m: f64, azimuth_deg: f64, elevation_deg: f64, rcs: f64) -> Self {
        let cfg = &s.config;
        let first = cfg.first_bin_index;
        let last = first + cfg.num_bins as i64 - 1;
        // The upper edge of the last bin belongs to that bin.
        let bin_index = cfg.bin_of_range(range_m).clamp(first, last);
        Self {
            range_m,
            azimuth_deg,
            elevation_deg,
            bin_index,
            rcs,
            position: sph_to_cart(range_m, azimuth_deg, elevation_deg),
        }
    }

    /// Offset of the target bin within the constrained bins.
    pub fn bin_offset(&self, s: &Scenario) -> usize {
        (self.bin_index - s.config.first_bin_index) as usize
    }
}

/// Uniform target over the constrained area with uniform RCS in
/// `[mu - l/2, mu + l/2]`.
pub fn sample_target(s: &Scenario, rng_seed: u64) -> TargetTruth {
    let cfg = &s.config;
    let mut rng = seeded(rng_seed);
    let (r0, r1) = cfg.target_range_interval();
    let (a0, a1) = cfg.azimuth_bounds_deg;
    let (e0, e1) = cfg.elevation_bounds_deg;
    let r = r0 + (r1 - r0) * rng.random::<f64>();
    let az = a0 + (a1 - a0) * rng.random::<f64>();
    let el = e0 + (e1 - e0) * rng.random::<f64>();
    let u: f64 = rng.random();
    let rcs = cfg.rcs_mean + cfg.rcs_range * (u - 0.5);
    TargetTruth::new(s, r, az, el, rcs)
}
