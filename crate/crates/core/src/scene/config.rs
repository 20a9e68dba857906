use crate::error::{Error, Result};
use crate::scene::geometry::Enu;

/// Ground clutter model: a polar grid of patches around the platform with a
/// spatially correlated log-normal power texture.
#[derive(Debug, Clone, PartialEq)]
pub struct ClutterConfig {
    /// Simulation region in world meters North (origin at the original platform).
    pub region_north_m: (f64, f64),
    /// Simulation region in world meters East.
    pub region_east_m: (f64, f64),
    pub ring_spacing_m: f64,
    pub azimuth_step_deg: f64,
    /// Patches per grid cell; 0 disables clutter.
    pub density: usize,
    /// Extra slant range around the constrained area covered by the patch
    /// field, so displaced platforms still see clutter in every bin.
    pub margin_m: f64,
    /// Mean per-channel clutter-to-noise ratio over the original bins.
    pub cnr_db: f64,
    pub texture_std_db: f64,
    pub correlation_length_m: f64,
    pub texture_modes: usize,
}

impl Default for ClutterConfig {
    fn default() -> Self {
        Self {
            region_north_m: (3726.0, 23551.0),
            region_east_m: (4124.0, 24049.0),
            ring_spacing_m: 10.0,
            azimuth_step_deg: 0.25,
            density: 1,
            margin_m: 2000.0,
            cnr_db: 25.0,
            texture_std_db: 8.0,
            correlation_length_m: 800.0,
            texture_modes: 48,
        }
    }
}

/// Platform placement, constrained target area, grid resolution and target
/// statistics for one platform location.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Horizontal platform position; `up` is ignored in favor of
    /// `platform_height_m`.
    pub platform: Enu,
    pub platform_height_m: f64,
    /// Distance `G` that anchors the range-bin grid.
    pub standoff_m: f64,
    /// Midpoints of the first and last range bin of the constrained area.
    pub range_bounds_m: (f64, f64),
    pub azimuth_bounds_deg: (f64, f64),
    pub elevation_bounds_deg: (f64, f64),
    pub range_resolution_m: f64,
    pub azimuth_resolution_deg: f64,
    pub elevation_resolution_deg: f64,
    pub num_bins: usize,
    /// Index `P` of the first range bin.
    pub first_bin_index: i64,
    pub rcs_mean: f64,
    pub rcs_range: f64,
    /// Per-channel thermal noise power.
    pub noise_power: f64,
    pub clutter_seed: u64,
    pub num_realizations: usize,
    pub clutter: ClutterConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::original()
    }
}

impl ScenarioConfig {
    /// Original platform location with its 5-bin constrained area.
    pub fn original() -> Self {
        let mut cfg = Self {
            platform: Enu::default(),
            platform_height_m: 1000.0,
            standoff_m: 0.0,
            range_bounds_m: (14553.0, 14673.0),
            azimuth_bounds_deg: (20.0, 30.0),
            elevation_bounds_deg: (-4.1, -3.9),
            range_resolution_m: 30.0,
            azimuth_resolution_deg: 0.4,
            elevation_resolution_deg: 0.01,
            num_bins: 5,
            first_bin_index: 0,
            rcs_mean: 1.0,
            rcs_range: 1.0,
            noise_power: 1.0,
            clutter_seed: 2023,
            num_realizations: 100,
            clutter: ClutterConfig::default(),
        };
        cfg.align_bins();
        cfg
    }

    pub fn platform_position(&self) -> Enu {
        Enu::new(self.platform.north, self.platform.east, self.platform_height_m)
    }

    /// Slant distance from the platform to the nearest ground point of the
    /// simulation region.
    pub fn region_distance(&self) -> f64 {
        let c = &self.clutter;
        let n = self.platform.north.clamp(c.region_north_m.0, c.region_north_m.1);
        let e = self.platform.east.clamp(c.region_east_m.0, c.region_east_m.1);
        self.platform_position().distance(&Enu::new(n, e, 0.0))
    }

    /// Chooses the first bin index `P` and standoff `G` so that the range-bin
    /// grid starts at the simulation region and `r_min` is the midpoint of
    /// bin `P`.
    pub fn align_bins(&mut self) {
        let dr = self.range_resolution_m;
        let geometric = self.region_distance();
        let p = ((self.range_bounds_m.0 - dr / 2.0 - geometric) / dr).floor().max(0.0);
        self.first_bin_index = p as i64;
        self.standoff_m = self.range_bounds_m.0 - dr / 2.0 - p * dr;
    }

    /// Midpoint of absolute range bin `rho`.
    pub fn bin_center(&self, rho: i64) -> f64 {
        self.standoff_m + (rho as f64 + 0.5) * self.range_resolution_m
    }

    /// Absolute range bin containing slant range `r`, if any.
    pub fn bin_of_range(&self, r: f64) -> i64 {
        ((r - self.standoff_m) / self.range_resolution_m).floor() as i64
    }

    /// Target range interval: the constrained bins widened by half a bin on
    /// each side.
    pub fn target_range_interval(&self) -> (f64, f64) {
        let half = self.range_resolution_m / 2.0;
        (self.range_bounds_m.0 - half, self.range_bounds_m.1 + half)
    }

    pub fn num_azimuths(&self) -> usize {
        grid_count(self.azimuth_bounds_deg, self.azimuth_resolution_deg)
    }

    pub fn num_elevations(&self) -> usize {
        grid_count(self.elevation_bounds_deg, self.elevation_resolution_deg)
    }

    pub fn azimuth_grid(&self) -> Vec<f64> {
        (0..self.num_azimuths())
            .map(|i| self.azimuth_bounds_deg.0 + i as f64 * self.azimuth_resolution_deg)
            .collect()
    }

    pub fn elevation_grid(&self) -> Vec<f64> {
        (0..self.num_elevations())
            .map(|j| self.elevation_bounds_deg.0 + j as f64 * self.elevation_resolution_deg)
            .collect()
    }

    pub fn boresight_deg(&self) -> (f64, f64) {
        (
            0.5 * (self.azimuth_bounds_deg.0 + self.azimuth_bounds_deg.1),
            0.5 * (self.elevation_bounds_deg.0 + self.elevation_bounds_deg.1),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, field: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, "must be finite"))
            }
        };
        finite(self.platform.north, "scenario.platform_north_m")?;
        finite(self.platform.east, "scenario.platform_east_m")?;
        if !(self.platform_height_m > 0.0) {
            return Err(Error::config("scenario.platform_height_m", "must be positive"));
        }
        if !(self.range_resolution_m > 0.0) {
            return Err(Error::config("scenario.range_resolution_m", "must be positive"));
        }
        if !(self.azimuth_resolution_deg > 0.0) {
            return Err(Error::config("scenario.azimuth_resolution_deg", "must be positive"));
        }
        if !(self.elevation_resolution_deg > 0.0) {
            return Err(Error::config("scenario.elevation_resolution_deg", "must be positive"));
        }
        let (r0, r1) = self.range_bounds_m;
        if !(r0 < r1) || !(r0 > 0.0) {
            return Err(Error::config("scenario.range_bounds_m", "need 0 < r_min < r_max"));
        }
        if self.num_bins < 2 {
            return Err(Error::config("scenario.num_bins", "need at least two range bins"));
        }
        let span_bins = (r1 - r0) / self.range_resolution_m;
        if (span_bins - (self.num_bins as f64 - 1.0)).abs() > 1e-6 {
            return Err(Error::config(
                "scenario.range_bounds_m",
                format!(
                    "r_max - r_min must equal (num_bins - 1) * range_resolution_m, got {span_bins} bins of spacing"
                ),
            ));
        }
        let (a0, a1) = self.azimuth_bounds_deg;
        if !(a0 < a1) {
            return Err(Error::config("scenario.azimuth_bounds_deg", "need min < max"));
        }
        check_grid(self.azimuth_bounds_deg, self.azimuth_resolution_deg, "scenario.azimuth_bounds_deg")?;
        let (e0, e1) = self.elevation_bounds_deg;
        if !(e0 < e1) || e0 <= -90.0 || e1 >= 90.0 {
            return Err(Error::config("scenario.elevation_bounds_deg", "need -90 < min < max < 90"));
        }
        check_grid(self.elevation_bounds_deg, self.elevation_resolution_deg, "scenario.elevation_bounds_deg")?;
        let mid = self.bin_center(self.first_bin_index);
        if (mid - r0).abs() > 1e-6 {
            return Err(Error::config(
                "scenario.standoff_m",
                format!("r_min {r0} is not the midpoint of bin {} ({mid})", self.first_bin_index),
            ));
        }
        if !(self.rcs_mean >= 0.0) {
            return Err(Error::config("scenario.rcs_mean", "must be nonnegative"));
        }
        if !(self.rcs_range >= 0.0) || self.rcs_range > 2.0 * self.rcs_mean {
            return Err(Error::config("scenario.rcs_range", "need 0 <= rcs_range <= 2 * rcs_mean"));
        }
        if !(self.noise_power >= 0.0) {
            return Err(Error::config("scenario.noise_power", "must be nonnegative"));
        }
        if self.num_realizations < 1 {
            return Err(Error::config("scenario.num_realizations", "must be at least 1"));
        }
        let c = &self.clutter;
        if !(c.region_north_m.0 < c.region_north_m.1) {
            return Err(Error::config("clutter.region_north_m", "need min < max"));
        }
        if !(c.region_east_m.0 < c.region_east_m.1) {
            return Err(Error::config("clutter.region_east_m", "need min < max"));
        }
        if !(c.ring_spacing_m > 0.0) {
            return Err(Error::config("clutter.ring_spacing_m", "must be positive"));
        }
        if !(c.azimuth_step_deg > 0.0) {
            return Err(Error::config("clutter.azimuth_step_deg", "must be positive"));
        }
        if !(c.margin_m >= 0.0) {
            return Err(Error::config("clutter.margin_m", "must be nonnegative"));
        }
        if !c.cnr_db.is_finite() {
            return Err(Error::config("clutter.cnr_db", "must be finite"));
        }
        if !(c.texture_std_db >= 0.0) {
            return Err(Error::config("clutter.texture_std_db", "must be nonnegative"));
        }
        if !(c.correlation_length_m > 0.0) {
            return Err(Error::config("clutter.correlation_length_m", "must be positive"));
        }
        Ok(())
    }
}

fn grid_count(bounds: (f64, f64), step: f64) -> usize {
    ((bounds.1 - bounds.0) / step).round() as usize + 1
}

fn check_grid(bounds: (f64, f64), step: f64, field: &str) -> Result<()> {
    let steps = (bounds.1 - bounds.0) / step;
    if (steps - steps.round()).abs() > 1e-6 {
        return Err(Error::config(field, format!("extent is not a whole number of {step} steps")));
    }
    Ok(())
}
