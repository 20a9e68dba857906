//! Coordinate transforms, label encoding, the cell-midpoint localizer and
//! localization-error metrics.
//!
//! Cartesian coordinates are platform-centered with x pointing North, y East
//! and z up. Azimuth is measured from North toward East.

use crate::error::{Error, Result};
use crate::scene::Scenario;
use crate::stap::HeatmapTensor;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CartesianPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &CartesianPoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }
}

pub fn sph_to_cart(r: f64, azimuth_deg: f64, elevation_deg: f64) -> CartesianPoint {
    let (th, ph) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    CartesianPoint::new(r * ph.cos() * th.cos(), r * ph.cos() * th.sin(), r * ph.sin())
}

/// Inverse of [`sph_to_cart`]: `(r, azimuth_deg, elevation_deg)`.
pub fn cart_to_sph(p: &CartesianPoint) -> (f64, f64, f64) {
    let r = p.norm();
    if r == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let az = p.y.atan2(p.x).to_degrees();
    let el = (p.z / r).clamp(-1.0, 1.0).asin().to_degrees();
    (r, az, el)
}

/// Network regression target: each Cartesian axis mapped affinely onto
/// [-1, 1] over the constrained area's bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EncodedLabel(pub [f64; 3]);

/// Axis-aligned Cartesian bounding box of a scenario's constrained area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

const AXES: [&str; 3] = ["x", "y", "z"];

impl LabelBox {
    pub fn from_scenario(s: &Scenario) -> Self {
        let cfg = &s.config;
        let (r0, r1) = cfg.target_range_interval();
        let (a0, a1) = cfg.azimuth_bounds_deg;
        let (e0, e1) = cfg.elevation_bounds_deg;
        Self::from_spherical_box((r0, r1), (a0, a1), (e0, e1))
    }

    /// Bounding box of a spherical box. Extremes of each coordinate lie on the
    /// corners or where the angle crosses a multiple of 90 degrees.
    pub fn from_spherical_box(r: (f64, f64), az: (f64, f64), el: (f64, f64)) -> Self {
        let crossings = |lo: f64, hi: f64| {
            let mut v = vec![lo, hi];
            let mut k = (lo / 90.0).ceil() * 90.0;
            while k < hi {
                v.push(k);
                k += 90.0;
            }
            v
        };
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for &rr in &[r.0, r.1] {
            for &a in &crossings(az.0, az.1) {
                for &e in &crossings(el.0, el.1) {
                    let p = sph_to_cart(rr, a, e).as_array();
                    for k in 0..3 {
                        min[k] = min[k].min(p[k]);
                        max[k] = max[k].max(p[k]);
                    }
                }
            }
        }
        Self { min, max }
    }

    pub fn center(&self) -> CartesianPoint {
        CartesianPoint::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    pub fn encode(&self, p: &CartesianPoint) -> Result<EncodedLabel> {
        let v = p.as_array();
        let mut out = [0.0; 3];
        for k in 0..3 {
            let tol = 1e-9 * (self.max[k] - self.min[k]).abs().max(1.0);
            if !v[k].is_finite() || v[k] < self.min[k] - tol || v[k] > self.max[k] + tol {
                return Err(Error::Domain(format!(
                    "{} = {} lies outside the label box [{}, {}]",
                    AXES[k], v[k], self.min[k], self.max[k]
                )));
            }
            out[k] = (2.0 * (v[k] - self.min[k]) / (self.max[k] - self.min[k]) - 1.0).clamp(-1.0, 1.0);
        }
        Ok(EncodedLabel(out))
    }

    pub fn decode(&self, e: &EncodedLabel) -> CartesianPoint {
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = self.min[k] + 0.5 * (e.0[k] + 1.0) * (self.max[k] - self.min[k]);
        }
        CartesianPoint::from_array(out)
    }
}

pub fn encode_label(p: &CartesianPoint, s: &Scenario) -> Result<EncodedLabel> {
    LabelBox::from_scenario(s).encode(p)
}

pub fn decode_label(e: &EncodedLabel, s: &Scenario) -> CartesianPoint {
    LabelBox::from_scenario(s).decode(e)
}

/// Index `(bin, azimuth, elevation)` of the largest tensor value; ties go to
/// the lexicographically smallest index.
pub fn peak_cell(t: &HeatmapTensor) -> (usize, usize, usize) {
    let [_, na, ne] = t.shape;
    let mut best = 0usize;
    for (i, &v) in t.values.iter().enumerate() {
        if v > t.values[best] {
            best = i;
        }
    }
    (best / (na * ne), (best / ne) % na, best % ne)
}

/// Classical estimate: midpoint of the grid cell holding the peak statistic.
pub fn peak_cell_midpoint(t: &HeatmapTensor, s: &Scenario) -> CartesianPoint {
    let (b, i, j) = peak_cell(t);
    let cfg = &s.config;
    let r = cfg.bin_center(cfg.first_bin_index + b as i64);
    let az = cfg.azimuth_bounds_deg.0 + i as f64 * cfg.azimuth_resolution_deg;
    let el = cfg.elevation_bounds_deg.0 + j as f64 * cfg.elevation_resolution_deg;
    sph_to_cart(r, az, el)
}

pub fn avg_euclidean_error(preds: &[CartesianPoint], truths: &[CartesianPoint]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::argument(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::argument("no examples to score"));
    }
    let total: f64 = preds.iter().zip(truths).map(|(p, t)| p.distance(t)).sum();
    Ok(total / preds.len() as f64)
}

/// Error ratio classical / network; values above 1 favor the network.
pub fn gain(err_namf: f64, err_cnn: f64) -> f64 {
    if err_cnn == 0.0 {
        f64::INFINITY
    } else {
        err_namf / err_cnn
    }
}

/// Mean distance between a point drawn uniformly over one spherical grid
/// cell (range, azimuth and elevation widths centered on `center`) and the
/// cell midpoint. This is the error floor of any estimator that reports
/// cell midpoints.
pub fn quantization_floor(center: (f64, f64, f64), widths: (f64, f64, f64), draws: usize, seed: u64) -> Result<f64> {
    use rand::Rng;
    if draws == 0 {
        return Err(Error::argument("quantization floor needs at least one draw"));
    }
    let (r, az, el) = center;
    let (dr, da, de) = widths;
    let mid = sph_to_cart(r, az, el);
    let mut rng = crate::rng::seeded(seed);
    let total: f64 = (0..draws)
        .map(|_| {
            let p = sph_to_cart(
                r + dr * (rng.random::<f64>() - 0.5),
                az + da * (rng.random::<f64>() - 0.5),
                el + de * (rng.random::<f64>() - 0.5),
            );
            p.distance(&mid)
        })
        .sum();
    Ok(total / draws as f64)
}
