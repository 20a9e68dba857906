use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::localize::{cart_to_sph, sph_to_cart, CartesianPoint};
use crate::rng::{derive_seed, seeded};
use crate::scene::config::ScenarioConfig;
use crate::scene::geometry::{ArrayGeometry, Enu};

/// Platform location tag: the original location or a compass displacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioTag {
    O,
    N,
    NW,
    W,
    SW,
    S,
    SE,
    E,
    NE,
}

impl ScenarioTag {
    pub const DISPLACED: [ScenarioTag; 8] = [
        ScenarioTag::N,
        ScenarioTag::NW,
        ScenarioTag::W,
        ScenarioTag::SW,
        ScenarioTag::S,
        ScenarioTag::SE,
        ScenarioTag::E,
        ScenarioTag::NE,
    ];

    /// Unit (east, north) direction of the displacement.
    pub fn direction(self) -> (f64, f64) {
        let d = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            ScenarioTag::O => (0.0, 0.0),
            ScenarioTag::N => (0.0, 1.0),
            ScenarioTag::NW => (-d, d),
            ScenarioTag::W => (-1.0, 0.0),
            ScenarioTag::SW => (-d, -d),
            ScenarioTag::S => (0.0, -1.0),
            ScenarioTag::SE => (d, -d),
            ScenarioTag::E => (1.0, 0.0),
            ScenarioTag::NE => (d, d),
        }
    }

    /// Nearest compass tag for an (east, north) offset; the zero offset maps
    /// to `O`.
    pub fn from_offset(east: f64, north: f64) -> Self {
        if east == 0.0 && north == 0.0 {
            return ScenarioTag::O;
        }
        let bearing = east.atan2(north).to_degrees().rem_euclid(360.0);
        let sector = ((bearing + 22.5) / 45.0).floor() as usize % 8;
        [
            ScenarioTag::N,
            ScenarioTag::NE,
            ScenarioTag::E,
            ScenarioTag::SE,
            ScenarioTag::S,
            ScenarioTag::SW,
            ScenarioTag::W,
            ScenarioTag::NW,
        ][sector]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioTag::O => "O",
            ScenarioTag::N => "N",
            ScenarioTag::NW => "NW",
            ScenarioTag::W => "W",
            ScenarioTag::SW => "SW",
            ScenarioTag::S => "S",
            ScenarioTag::SE => "SE",
            ScenarioTag::E => "E",
            ScenarioTag::NE => "NE",
        }
    }
}

impl fmt::Display for ScenarioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = match s.trim().to_ascii_uppercase().as_str() {
            "O" => ScenarioTag::O,
            "N" => ScenarioTag::N,
            "NW" => ScenarioTag::NW,
            "W" => ScenarioTag::W,
            "SW" => ScenarioTag::SW,
            "S" => ScenarioTag::S,
            "SE" => ScenarioTag::SE,
            "E" => ScenarioTag::E,
            "NE" => ScenarioTag::NE,
            other => return Err(Error::argument(format!("unknown scenario tag `{other}`"))),
        };
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClutterPatch {
    pub position: Enu,
    pub mean_power: f64,
    pub patch_id: u32,
}

/// One platform location: its configuration, array, and the ground clutter
/// patch field (shared in world coordinates across displacements).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub geometry: ArrayGeometry,
    pub patches: Vec<ClutterPatch>,
    pub tag: ScenarioTag,
    /// World position of the constrained area's center.
    pub anchor: Enu,
}

/// Smooth zero-mean, unit-variance Gaussian field built from random Fourier
/// features.
struct Texture {
    modes: Vec<(f64, f64, f64)>,
}

impl Texture {
    fn new(seed: u64, n_modes: usize, corr_len: f64) -> Self {
        let mut rng = seeded(derive_seed(seed, 0x7E87));
        let modes = (0..n_modes.max(1))
            .map(|_| {
                let kn: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) / corr_len;
                let ke: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) / corr_len;
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                (kn, ke, phase)
            })
            .collect();
        Self { modes }
    }

    fn eval(&self, p: &Enu) -> f64 {
        let s: f64 = self.modes.iter().map(|&(kn, ke, ph)| (kn * p.north + ke * p.east + ph).cos()).sum();
        s * (2.0 / self.modes.len() as f64).sqrt()
    }
}

fn patch_field(config: &ScenarioConfig) -> Vec<ClutterPatch> {
    let c = &config.clutter;
    if c.density == 0 {
        return Vec::new();
    }
    let platform = config.platform_position();
    let h = config.platform_height_m;
    let (t0, t1) = config.target_range_interval();
    let r_lo = (t0 - c.margin_m).max(h + c.ring_spacing_m);
    let r_hi = t1 + c.margin_m;
    let rings = ((r_hi - r_lo) / c.ring_spacing_m).ceil() as usize;
    let steps = (360.0 / c.azimuth_step_deg).round() as usize;
    let texture = Texture::new(config.clutter_seed, c.texture_modes, c.correlation_length_m);
    let mut patches = Vec::new();
    let mut id = 0u32;
    for ring in 0..rings {
        let slant = r_lo + (ring as f64 + 0.5) * c.ring_spacing_m;
        let ground = (slant * slant - h * h).sqrt();
        for step in 0..steps {
            for sub in 0..c.density {
                let az = (step as f64 + (sub as f64 + 0.5) / c.density as f64) * c.azimuth_step_deg;
                let (sa, ca) = az.to_radians().sin_cos();
                let pos = Enu::new(platform.north + ground * ca, platform.east + ground * sa, 0.0);
                let inside = pos.north >= c.region_north_m.0
                    && pos.north <= c.region_north_m.1
                    && pos.east >= c.region_east_m.0
                    && pos.east <= c.region_east_m.1;
                if !inside {
                    continue;
                }
                let db = c.texture_std_db * texture.eval(&pos);
                patches.push(ClutterPatch {
                    position: pos,
                    mean_power: 10f64.powf(db / 10.0),
                    patch_id: id,
                });
                id += 1;
            }
        }
    }
    patches
}

impl Scenario {
    pub fn boresight_deg(&self) -> (f64, f64) {
        self.config.boresight_deg()
    }

    /// Platform-relative Cartesian position of a world point.
    pub fn relative(&self, p: &Enu) -> CartesianPoint {
        let pl = self.config.platform_position();
        CartesianPoint::new(p.north - pl.north, p.east - pl.east, p.up - pl.up)
    }

    /// `(range, azimuth_deg, elevation_deg)` of a world point seen from the
    /// platform.
    pub fn look_angles(&self, p: &Enu) -> (f64, f64, f64) {
        cart_to_sph(&self.relative(p))
    }

    /// Array response toward `(r, azimuth, elevation)`; range does not enter
    /// under the far-field model.
    pub fn steering_vector(&self, _r: f64, azimuth_deg: f64, elevation_deg: f64) -> CVector {
        self.geometry.steering(self.boresight_deg(), azimuth_deg, elevation_deg)
    }

    /// Absolute index of the `k`-th constrained range bin.
    pub fn bin_index(&self, k: usize) -> i64 {
        self.config.first_bin_index + k as i64
    }

    /// Patches whose slant range falls in constrained bin `k`.
    pub fn patches_in_bin(&self, k: usize) -> impl Iterator<Item = &ClutterPatch> {
        let rho = self.bin_index(k);
        let platform = self.config.platform_position();
        self.patches
            .iter()
            .filter(move |p| self.config.bin_of_range(platform.distance(&p.position)) == rho)
    }
}

pub fn build_scenario(config: ScenarioConfig, geometry: ArrayGeometry, tag: ScenarioTag) -> Result<Scenario> {
    config.validate()?;
    geometry.validate()?;
    let (r0, r1) = config.range_bounds_m;
    let (a0, a1) = config.azimuth_bounds_deg;
    let (e0, e1) = config.elevation_bounds_deg;
    let center = sph_to_cart(0.5 * (r0 + r1), 0.5 * (a0 + a1), 0.5 * (e0 + e1));
    let pl = config.platform_position();
    let anchor = Enu::new(pl.north + center.x, pl.east + center.y, pl.up + center.z);
    let mut scenario = Scenario {
        patches: patch_field(&config),
        config,
        geometry,
        tag,
        anchor,
    };
    normalize_clutter(&mut scenario);
    Ok(scenario)
}

/// Scales patch powers so the mean per-channel clutter power over the
/// constrained bins equals the configured clutter-to-noise ratio.
fn normalize_clutter(s: &mut Scenario) {
    if s.patches.is_empty() {
        return;
    }
    let boresight = s.boresight_deg();
    let mut total = 0.0;
    for k in 0..s.config.num_bins {
        for p in s.patches_in_bin(k) {
            let (_, az, el) = s.look_angles(&p.position);
            let g = s.geometry.subarray_gain(boresight, az, el);
            total += p.mean_power * g * g;
        }
    }
    let per_bin = total / s.config.num_bins as f64;
    if per_bin <= 0.0 {
        return;
    }
    let target = 10f64.powf(s.config.clutter.cnr_db / 10.0) * s.config.noise_power;
    let scale = target / per_bin;
    for p in &mut s.patches {
        p.mean_power *= scale;
    }
}

/// Moves the platform by an (east, north) offset. The patch field stays fixed
/// in world coordinates; the constrained area keeps its azimuth window and
/// gets range and elevation bounds re-derived from the distance to the
/// original area's center.
pub fn displace_platform(s: &Scenario, offset_east: f64, offset_north: f64) -> Scenario {
    let tag = ScenarioTag::from_offset(offset_east, offset_north);
    if offset_east == 0.0 && offset_north == 0.0 {
        return Scenario { tag, ..s.clone() };
    }
    let mut config = s.config.clone();
    config.platform.north += offset_north;
    config.platform.east += offset_east;
    let pl = config.platform_position();
    let rel = CartesianPoint::new(s.anchor.north - pl.north, s.anchor.east - pl.east, s.anchor.up - pl.up);
    let (r_c, _, el_c) = cart_to_sph(&rel);
    let half_r = 0.5 * (config.range_bounds_m.1 - config.range_bounds_m.0);
    let half_e = 0.5 * (config.elevation_bounds_deg.1 - config.elevation_bounds_deg.0);
    config.range_bounds_m = (r_c - half_r, r_c + half_r);
    config.elevation_bounds_deg = (el_c - half_e, el_c + half_e);
    config.align_bins();
    Scenario {
        config,
        geometry: s.geometry.clone(),
        patches: s.patches.clone(),
        tag,
        anchor: s.anchor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn original() -> Scenario {
        build_scenario(ScenarioConfig::original(), ArrayGeometry::default(), ScenarioTag::O).unwrap()
    }

    #[test]
    fn tags_roundtrip_and_classify_offsets() {
        for t in ScenarioTag::DISPLACED {
            assert_eq!(t.as_str().parse::<ScenarioTag>().unwrap(), t);
            let (e, n) = t.direction();
            assert_eq!(ScenarioTag::from_offset(1000.0 * e, 1000.0 * n), t);
        }
        assert_eq!(ScenarioTag::from_offset(0.0, 0.0), ScenarioTag::O);
        assert!("Q".parse::<ScenarioTag>().is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let a = original();
        let b = original();
        assert_eq!(a, b);
        assert!(!a.patches.is_empty());
    }

    #[test]
    fn seeds_change_power_not_position() {
        let a = original();
        let mut cfg = ScenarioConfig::original();
        cfg.clutter_seed += 1;
        let b = build_scenario(cfg, ArrayGeometry::default(), ScenarioTag::O).unwrap();
        assert_eq!(a.patches.len(), b.patches.len());
        assert!(a.patches.iter().zip(&b.patches).all(|(p, q)| p.position == q.position));
        assert!(a.patches.iter().zip(&b.patches).any(|(p, q)| p.mean_power != q.mean_power));
    }

    #[test]
    fn zero_density_means_no_clutter() {
        let mut cfg = ScenarioConfig::original();
        cfg.clutter.density = 0;
        let s = build_scenario(cfg, ArrayGeometry::default(), ScenarioTag::O).unwrap();
        assert!(s.patches.is_empty());
    }

    #[test]
    fn clutter_power_matches_cnr() {
        let s = original();
        let boresight = s.boresight_deg();
        let mut total = 0.0;
        for k in 0..5 {
            for p in s.patches_in_bin(k) {
                let (_, az, el) = s.look_angles(&p.position);
                let g = s.geometry.subarray_gain(boresight, az, el);
                total += p.mean_power * g * g;
            }
        }
        let target = 10f64.powf(s.config.clutter.cnr_db / 10.0) * s.config.noise_power;
        assert!((total / 5.0 - target).abs() < 1e-9 * target, "{} vs {target}", total / 5.0);
    }

    #[test]
    fn zero_displacement_only_changes_tag() {
        let s = original();
        let d = displace_platform(&s, 0.0, 0.0);
        assert_eq!(d.config, s.config);
        assert_eq!(d.patches, s.patches);
    }

    #[test]
    fn north_displacement_shrinks_range() {
        let s = original();
        let d = displace_platform(&s, 0.0, 1000.0);
        assert_eq!(d.tag, ScenarioTag::N);
        d.config.validate().unwrap();
        let (r0, r1) = d.config.range_bounds_m;
        assert!(r0 < 14553.0 - 500.0 && r1 < 14673.0 - 500.0, "{r0} {r1}");
        assert!((r1 - r0 - 120.0).abs() < 1e-9);
        assert_eq!(d.config.azimuth_bounds_deg, (20.0, 30.0));
        assert_eq!(d.patches, s.patches);
    }

    #[test]
    fn opposite_displacements_cancel() {
        let s = original();
        let back = displace_platform(&displace_platform(&s, 1000.0, 0.0), -1000.0, 0.0);
        assert!((back.config.platform.north - s.config.platform.north).abs() < 1e-9);
        assert!((back.config.platform.east - s.config.platform.east).abs() < 1e-9);
        assert!((back.config.range_bounds_m.0 - s.config.range_bounds_m.0).abs() < 1e-6);
    }
}
