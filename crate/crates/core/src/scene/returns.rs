use crate::error::{Error, Result};
use crate::linalg::{center_rows, hermitian_eigen, spectral_function, CMatrix, C64};
use crate::rng::{complex_gaussian, derive_seed, seeded, unit_phasor};
use crate::scene::{Scenario, TargetTruth};

/// Matched-filtered array data for one range bin. Under the null hypothesis
/// `x` is zero and `y` holds the clutter-plus-noise matrix `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeBinData {
    pub bin_index: i64,
    pub y: CMatrix,
    pub x: CMatrix,
    pub c: CMatrix,
    pub n: CMatrix,
    pub target_present: bool,
}

impl RangeBinData {
    /// Null-hypothesis data, when no target was simulated.
    pub fn z(&self) -> Option<&CMatrix> {
        (!self.target_present).then_some(&self.y)
    }
}

/// Clutter statistics of one range bin: `sum_p P_p a_p a_p^H` and its
/// Hermitian square root.
#[derive(Debug, Clone)]
pub struct BinClutter {
    pub bin_index: i64,
    pub patch_count: usize,
    pub covariance: CMatrix,
    pub factor: CMatrix,
}

/// Per-scenario return generator. Clutter reflectivities are circular
/// Gaussian per patch and realization, so the clutter columns of a bin are
/// drawn through the square root of the patch-sum covariance.
#[derive(Debug, Clone)]
pub struct ReturnSimulator {
    scenario: Scenario,
    bins: Vec<BinClutter>,
}

impl ReturnSimulator {
    pub fn new(scenario: &Scenario) -> Self {
        let l = scenario.geometry.num_channels;
        let bins = (0..scenario.config.num_bins)
            .map(|k| {
                let mut cov = CMatrix::zeros(l, l);
                let mut count = 0;
                for p in scenario.patches_in_bin(k) {
                    let (r, az, el) = scenario.look_angles(&p.position);
                    let a = scenario.steering_vector(r, az, el);
                    cov.ger(C64::new(p.mean_power, 0.0), &a, &a, C64::new(1.0, 0.0));
                    count += 1;
                }
                let factor = if count == 0 {
                    CMatrix::zeros(l, l)
                } else {
                    let eig = hermitian_eigen(&cov);
                    spectral_function(&eig, |v| v.max(0.0).sqrt())
                };
                BinClutter {
                    bin_index: scenario.bin_index(k),
                    patch_count: count,
                    covariance: cov,
                    factor,
                }
            })
            .collect();
        Self {
            scenario: scenario.clone(),
            bins,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn bins(&self) -> &[BinClutter] {
        &self.bins
    }

    /// Exact clutter-plus-noise covariance of bin `k` (before centering).
    pub fn expected_covariance(&self, k: usize) -> CMatrix {
        let l = self.scenario.geometry.num_channels;
        &self.bins[k].covariance + CMatrix::identity(l, l).scale(self.scenario.config.noise_power)
    }

    fn gaussian_matrix(&self, rows: usize, cols: usize, variance: f64, seed: u64) -> CMatrix {
        let mut rng = seeded(seed);
        CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng, variance))
    }

    fn bin_data(&self, k: usize, target: Option<&TargetTruth>, cols: usize, seed: u64) -> RangeBinData {
        let l = self.scenario.geometry.num_channels;
        let clutter = &self.bins[k];
        let mut c = if clutter.patch_count == 0 {
            CMatrix::zeros(l, cols)
        } else {
            &clutter.factor * self.gaussian_matrix(l, cols, 1.0, derive_seed(seed, 1))
        };
        let mut n = self.gaussian_matrix(l, cols, self.scenario.config.noise_power, derive_seed(seed, 2));
        let mut x = CMatrix::zeros(l, cols);
        let present = target.is_some();
        if let Some(t) = target.filter(|t| t.bin_index == clutter.bin_index) {
            let a = self.scenario.steering_vector(t.range_m, t.azimuth_deg, t.elevation_deg);
            let amp = t.rcs.max(0.0).sqrt();
            let mut rng = seeded(derive_seed(seed, 3));
            for j in 0..cols {
                let alpha = unit_phasor(&mut rng) * amp;
                x.column_mut(j).copy_from(&(&a * alpha));
            }
        }
        center_rows(&mut x);
        center_rows(&mut c);
        center_rows(&mut n);
        let y = &x + &c + &n;
        RangeBinData {
            bin_index: clutter.bin_index,
            y,
            x,
            c,
            n,
            target_present: present,
        }
    }

    /// Returns for every constrained bin: alternative hypothesis when a target
    /// is given, null hypothesis otherwise. All components are mean-centered
    /// per channel.
    pub fn simulate(&self, target: Option<&TargetTruth>, k: usize, rng_seed: u64) -> Result<Vec<RangeBinData>> {
        if k < 1 {
            return Err(Error::argument("need at least one realization (K >= 1)"));
        }
        Ok((0..self.scenario.config.num_bins)
            .map(|b| self.bin_data(b, target, k, derive_seed(rng_seed, b as u64)))
            .collect())
    }

    /// Dedicated null-hypothesis batch for bin `k`, used for covariance
    /// estimation. The seed depends only on the bin offset so that nearby
    /// platform locations share their random draws.
    pub fn null_batch(&self, k: usize, columns: usize, seed: u64) -> CMatrix {
        self.bin_data(k, None, columns, derive_seed(seed, k as u64)).y
    }
}

pub fn simulate_returns(
    s: &Scenario,
    target: Option<&TargetTruth>,
    k: usize,
    rng_seed: u64,
) -> Result<Vec<RangeBinData>> {
    ReturnSimulator::new(s).simulate(target, k, rng_seed)
}
