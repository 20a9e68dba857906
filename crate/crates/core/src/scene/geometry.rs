use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{C64, CVector};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Local world frame: meters North, East and Up.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Enu {
    pub north: f64,
    pub east: f64,
    pub up: f64,
}

impl Enu {
    pub fn new(north: f64, east: f64, up: f64) -> Self {
        Self { north, east, up }
    }

    pub fn distance(&self, other: &Enu) -> f64 {
        ((self.north - other.north).powi(2)
            + (self.east - other.east).powi(2)
            + (self.up - other.up).powi(2))
        .sqrt()
    }
}

/// Receive array condensed to `num_channels` beamformed subarrays laid out
/// as a horizontal uniform linear array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub num_channels: usize,
    pub element_spacing_m: f64,
    pub wavelength_m: f64,
    /// Horizontal elements beamformed into each channel.
    pub subarray_factor: usize,
    /// Vertical elements beamformed into each channel.
    pub vertical_elements: usize,
}

impl Default for ArrayGeometry {
    /// 48 x 5 element array at 10 GHz, 0.015 m spacing, condensed to 16
    /// channels of 3 x 5 elements.
    fn default() -> Self {
        Self {
            num_channels: 16,
            element_spacing_m: 0.015,
            wavelength_m: SPEED_OF_LIGHT / 10.0e9,
            subarray_factor: 3,
            vertical_elements: 5,
        }
    }
}

/// Normalized magnitude of an `m`-element uniform array factor at
/// path-difference projection `u` (so that `u = 0` gives 1).
fn array_factor(m: usize, spacing: f64, wavelength: f64, u: f64) -> f64 {
    if m <= 1 {
        return 1.0;
    }
    let psi = PI * spacing * u / wavelength;
    let den = (m as f64) * psi.sin();
    if den.abs() < 1e-12 {
        1.0
    } else {
        ((m as f64 * psi).sin() / den).abs()
    }
}

impl ArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.num_channels < 2 {
            return Err(Error::config("array.num_channels", "must be at least 2"));
        }
        if !(self.element_spacing_m > 0.0) {
            return Err(Error::config("array.element_spacing_m", "must be positive"));
        }
        if !(self.wavelength_m > 0.0) {
            return Err(Error::config("array.wavelength_m", "must be positive"));
        }
        if self.subarray_factor < 1 {
            return Err(Error::config("array.subarray_factor", "must be at least 1"));
        }
        if self.vertical_elements < 1 {
            return Err(Error::config("array.vertical_elements", "must be at least 1"));
        }
        Ok(())
    }

    /// Distance between adjacent channel phase centers.
    pub fn channel_spacing(&self) -> f64 {
        self.subarray_factor as f64 * self.element_spacing_m
    }

    /// Amplitude gain of one beamformed subarray steered at `boresight`,
    /// normalized to 1 on boresight.
    pub fn subarray_gain(&self, boresight_deg: (f64, f64), azimuth_deg: f64, elevation_deg: f64) -> f64 {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let (az_b, el_b) = (boresight_deg.0.to_radians(), boresight_deg.1.to_radians());
        let u_h = (az - az_b).sin() * el.cos();
        let u_v = el.sin() - el_b.sin();
        array_factor(self.subarray_factor, self.element_spacing_m, self.wavelength_m, u_h)
            * array_factor(self.vertical_elements, self.element_spacing_m, self.wavelength_m, u_v)
    }

    /// Channel-domain steering vector toward (azimuth, elevation), in degrees,
    /// for an array pointed at `boresight_deg`. Far field, so range does not
    /// enter.
    pub fn steering(&self, boresight_deg: (f64, f64), azimuth_deg: f64, elevation_deg: f64) -> CVector {
        let gain = self.subarray_gain(boresight_deg, azimuth_deg, elevation_deg);
        let u = (azimuth_deg - boresight_deg.0).to_radians().sin() * elevation_deg.to_radians().cos();
        let k = 2.0 * PI / self.wavelength_m * self.channel_spacing() * u;
        CVector::from_fn(self.num_channels, |l, _| C64::from_polar(gain, k * l as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadside_is_all_ones() {
        let g = ArrayGeometry::default();
        let a = g.steering((25.0, -4.0), 25.0, -4.0);
        for z in a.iter() {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_modulus() {
        let g = ArrayGeometry::default();
        let a = g.steering((25.0, -4.0), 22.3, -3.95);
        let gain = g.subarray_gain((25.0, -4.0), 22.3, -3.95);
        for z in a.iter() {
            assert!((z.norm() - gain).abs() < 1e-12);
        }
        let energy: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        assert!((energy - 16.0 * gain * gain).abs() < 1e-10);
    }

    #[test]
    fn beams_point_apart() {
        let g = ArrayGeometry::default();
        let a = g.steering((25.0, -4.0), 24.8, -4.0);
        let b = g.steering((25.0, -4.0), 25.2, -4.0);
        let ip = a.dotc(&b).norm();
        let na = a.norm_squared();
        assert!(ip < na, "{ip} vs {na}");
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut g = ArrayGeometry::default();
        g.num_channels = 1;
        assert!(matches!(g.validate(), Err(Error::Config { field, .. }) if field == "array.num_channels"));
    }
}
