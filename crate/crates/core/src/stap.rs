//! Covariance estimation, whitening, the NAMF statistic, heatmap tensors and
//! output SCNR.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, hermitian_eigen, hermitian_part, spectral_function, CMatrix, CVector, C64};
use crate::localize::LabelBox;
use crate::rng::derive_seed;
use crate::scene::{RangeBinData, ReturnSimulator, Scenario, TargetTruth};

/// Stand-in for `10 log10(0)`.
pub const SCNR_FLOOR_DB: f64 = -300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub sigma: CMatrix,
    pub inv_sqrt: CMatrix,
    pub loading: f64,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl CovarianceEstimate {
    /// Wraps a known Hermitian positive semi-definite matrix. Eigenvalues
    /// below `1e-12` of the largest are clamped before inversion.
    pub fn from_matrix(sigma: CMatrix, loading: f64) -> Result<Self> {
        let sigma = hermitian_part(&sigma);
        let eig = hermitian_eigen(&sigma);
        let top = eig.values.first().copied().unwrap_or(0.0);
        if !(top > 0.0) || !top.is_finite() {
            return Err(Error::Singular("covariance has no positive eigenvalue".into()));
        }
        let floor = 1e-12 * top;
        let inv_sqrt = spectral_function(&eig, |v| 1.0 / v.max(floor).sqrt());
        Ok(Self {
            sigma,
            inv_sqrt,
            loading,
            eigenvalues: eig.values.iter().map(|v| v.max(0.0)).collect(),
            eigenvectors: eig.vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// `Sigma^{-1}` through the clamped inverse square root.
    pub fn inverse(&self) -> CMatrix {
        &self.inv_sqrt * &self.inv_sqrt
    }
}

/// Sample covariance `(1/M) sum Z Z^H` over all batch columns plus
/// `loading_factor * mean(diag)` on the diagonal.
pub fn estimate_covariance(batches: &[CMatrix], loading_factor: f64) -> Result<CovarianceEstimate> {
    if !(loading_factor >= 0.0) {
        return Err(Error::argument("loading factor must be nonnegative"));
    }
    let l = batches
        .first()
        .map(|b| b.nrows())
        .ok_or_else(|| Error::argument("no data batches"))?;
    let mut acc = CMatrix::zeros(l, l);
    let mut m = 0usize;
    for b in batches {
        if b.nrows() != l {
            return Err(Error::argument(format!("batch has {} rows, expected {l}", b.nrows())));
        }
        acc.gemm(C64::new(1.0, 0.0), b, &b.adjoint(), C64::new(1.0, 0.0));
        m += b.ncols();
    }
    if m == 0 {
        return Err(Error::argument("batches contain no columns"));
    }
    let mut sigma = acc.unscale(m as f64);
    let mean_diag = sigma.diagonal().iter().map(|z| z.re).sum::<f64>() / l as f64;
    if !(mean_diag > 0.0) {
        return Err(Error::Singular("zero data matrix".into()));
    }
    if m < l && loading_factor == 0.0 {
        return Err(Error::Singular(format!("{m} columns cannot estimate a rank-{l} covariance without loading")));
    }
    let loading = loading_factor * mean_diag;
    for i in 0..l {
        sigma[(i, i)] += C64::new(loading, 0.0);
    }
    CovarianceEstimate::from_matrix(sigma, loading)
}

pub fn whiten(cov: &CovarianceEstimate, m: &CMatrix) -> Result<CMatrix> {
    if m.nrows() != cov.dim() {
        return Err(Error::argument(format!(
            "cannot whiten {} rows with a {}x{} covariance",
            m.nrows(),
            cov.dim(),
            cov.dim()
        )));
    }
    Ok(&cov.inv_sqrt * m)
}

/// NAMF statistic `|a^H Y|^2 / ((a^H a) * ||diag(Y^H Y)||_2)` for whitened
/// data `y_hat` (L x K) and whitened steering vector `a_hat`.
pub fn namf_statistic(y_hat: &CMatrix, a_hat: &CVector) -> Result<f64> {
    if y_hat.nrows() != a_hat.len() {
        return Err(Error::argument("steering vector length does not match data rows"));
    }
    let aa = a_hat.norm_squared();
    if aa == 0.0 {
        return Err(Error::Domain("zero steering vector".into()));
    }
    let energies = column_energy_norm(y_hat);
    if energies == 0.0 {
        return Err(Error::Domain("zero data matrix".into()));
    }
    let num: f64 = (0..y_hat.ncols()).map(|k| a_hat.dotc(&y_hat.column(k)).norm_sqr()).sum();
    Ok(num / (aa * energies))
}

/// Euclidean norm of the vector of column energies.
fn column_energy_norm(y: &CMatrix) -> f64 {
    y.column_iter()
        .map(|c| {
            let e: f64 = c.iter().map(|z| z.norm_sqr()).sum();
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

/// Covariance source for whitening.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSettings {
    /// Null-hypothesis columns per bin; 0 uses the exact expectation.
    pub columns: usize,
    pub loading_factor: f64,
    /// Pool all bins into one shared covariance.
    pub shared: bool,
}

impl Default for CovarianceSettings {
    fn default() -> Self {
        Self {
            columns: 1600,
            loading_factor: 1e-6,
            shared: false,
        }
    }
}

impl CovarianceSettings {
    pub fn for_channels(l: usize) -> Self {
        Self {
            columns: 100 * l,
            ..Self::default()
        }
    }
}

/// Clutter-plus-noise covariance of each constrained bin, estimated from a
/// dedicated null-hypothesis batch.
pub fn scenario_covariances(sim: &ReturnSimulator, settings: &CovarianceSettings) -> Result<Vec<CovarianceEstimate>> {
    let s = sim.scenario();
    let kappa = s.config.num_bins;
    let seed = derive_seed(s.config.clutter_seed, 0xC0_7A21);
    let matrices: Vec<CMatrix> = if settings.columns == 0 {
        (0..kappa).map(|k| sim.expected_covariance(k)).collect()
    } else {
        let batches: Vec<CMatrix> = (0..kappa).map(|k| sim.null_batch(k, settings.columns, seed)).collect();
        if settings.shared {
            let est = estimate_covariance(&batches, settings.loading_factor)?;
            return Ok(vec![est; kappa]);
        }
        return batches
            .iter()
            .map(|b| estimate_covariance(std::slice::from_ref(b), settings.loading_factor))
            .collect();
    };
    let with_loading = |m: &CMatrix| -> Result<CovarianceEstimate> {
        let l = m.nrows();
        let mean_diag = m.diagonal().iter().map(|z| z.re).sum::<f64>() / l as f64;
        let loading = settings.loading_factor * mean_diag;
        CovarianceEstimate::from_matrix(m + CMatrix::identity(l, l).scale(loading), loading)
    };
    if settings.shared {
        let mean = matrices.iter().fold(CMatrix::zeros(matrices[0].nrows(), matrices[0].ncols()), |a, m| a + m)
            .unscale(kappa as f64);
        let est = with_loading(&mean)?;
        return Ok(vec![est; kappa]);
    }
    matrices.iter().map(with_loading).collect()
}

/// Whitened steering vectors over the azimuth/elevation grid of every bin.
#[derive(Debug, Clone)]
pub struct SteeringGrid {
    pub azimuths: Vec<f64>,
    pub elevations: Vec<f64>,
    pub bin_ranges: Vec<f64>,
    /// `[bin][azimuth][elevation]` flattened, each of length L.
    pub whitened: Vec<CVector>,
    /// `a_hat^H a_hat` per entry of `whitened`.
    pub energies: Vec<f64>,
    pub label_box: LabelBox,
    pub scenario_id: String,
}

impl SteeringGrid {
    pub fn new(s: &Scenario, covs: &[CovarianceEstimate]) -> Result<Self> {
        let kappa = s.config.num_bins;
        if covs.len() != kappa {
            return Err(Error::argument(format!("{} covariances for {kappa} bins", covs.len())));
        }
        let azimuths = s.config.azimuth_grid();
        let elevations = s.config.elevation_grid();
        let bin_ranges: Vec<f64> = (0..kappa).map(|k| s.config.bin_center(s.bin_index(k))).collect();
        let mut whitened = Vec::with_capacity(kappa * azimuths.len() * elevations.len());
        for (k, cov) in covs.iter().enumerate() {
            for &az in &azimuths {
                for &el in &elevations {
                    whitened.push(&cov.inv_sqrt * s.steering_vector(bin_ranges[k], az, el));
                }
            }
        }
        let energies = whitened.iter().map(|a| a.norm_squared()).collect();
        Ok(Self {
            azimuths,
            elevations,
            bin_ranges,
            whitened,
            energies,
            label_box: LabelBox::from_scenario(s),
            scenario_id: s.tag.to_string(),
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.bin_ranges.len(), self.azimuths.len(), self.elevations.len()]
    }

    fn cells_per_bin(&self) -> usize {
        self.azimuths.len() * self.elevations.len()
    }
}

/// Label attached to a heatmap tensor, stored at 32-bit precision.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TensorLabel {
    /// Platform-relative Cartesian truth, meters.
    pub position: [f32; 3],
    pub encoded: [f32; 3],
    pub bin_index: u32,
}

/// `kappa x N_az x N_el` grid of NAMF values plus its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapTensor {
    pub shape: [usize; 3],
    /// Row-major: bin, then azimuth, then elevation.
    pub values: Vec<f32>,
    pub label: TensorLabel,
    pub scenario_id: String,
    /// Output SCNR at the target bin, dB.
    pub output_scnr_db: f32,
}

impl HeatmapTensor {
    pub fn at(&self, bin: usize, az: usize, el: usize) -> f32 {
        let [_, na, ne] = self.shape;
        self.values[(bin * na + az) * ne + el]
    }
}

/// `a^H R a` for Hermitian `r` stored column-major.
fn quadratic_form(r: &CMatrix, a: &CVector) -> f64 {
    let l = a.len();
    let rs = r.as_slice();
    let av = a.as_slice();
    let mut acc = 0.0;
    for j in 0..l {
        let col = &rs[j * l..(j + 1) * l];
        let mut v = C64::new(0.0, 0.0);
        for i in 0..l {
            v += av[i].conj() * col[i];
        }
        acc += (v * av[j]).re;
    }
    acc
}

/// NAMF heatmap of one bin through the data Gram matrix: the numerator
/// `|a^H Y|^2` equals `a^H (Y Y^H) a`.
fn bin_heatmap(y_hat: &CMatrix, grid: &SteeringGrid, k: usize, out: &mut [f32]) -> Result<()> {
    let denom_data = column_energy_norm(y_hat);
    if denom_data == 0.0 {
        return Err(Error::Domain(format!("zero data in bin offset {k}")));
    }
    let gram = y_hat * y_hat.adjoint();
    let cells = grid.cells_per_bin();
    for c in 0..cells {
        let idx = k * cells + c;
        let num = quadratic_form(&gram, &grid.whitened[idx]).max(0.0);
        out[c] = (num / (grid.energies[idx] * denom_data)) as f32;
    }
    Ok(())
}

/// Stacks per-bin NAMF images into a heatmap tensor and records the output
/// SCNR at the target bin.
pub fn build_heatmap(
    returns: &[RangeBinData],
    covs: &[CovarianceEstimate],
    grid: &SteeringGrid,
    truth: &TargetTruth,
) -> Result<HeatmapTensor> {
    let shape = grid.shape();
    let kappa = shape[0];
    if returns.len() != kappa || covs.len() != kappa {
        return Err(Error::argument(format!(
            "heatmap needs {kappa} bins, got {} returns and {} covariances",
            returns.len(),
            covs.len()
        )));
    }
    let cells = grid.cells_per_bin();
    let mut values = vec![0f32; kappa * cells];
    values
        .par_chunks_mut(cells)
        .enumerate()
        .try_for_each(|(k, out)| -> Result<()> {
            let y_hat = whiten(&covs[k], &returns[k].y)?;
            bin_heatmap(&y_hat, grid, k, out)
        })?;

    let offset = returns
        .iter()
        .position(|b| b.bin_index == truth.bin_index)
        .ok_or_else(|| Error::argument(format!("target bin {} missing from returns", truth.bin_index)))?;
    let target_bin = &returns[offset];
    let scnr = output_scnr(&target_bin.x, &target_bin.c, &target_bin.n, &covs[offset])?;
    let p = truth.position;
    let encoded = grid.label_box.encode(&p)?;
    Ok(HeatmapTensor {
        shape,
        values,
        label: TensorLabel {
            position: [p.x as f32, p.y as f32, p.z as f32],
            encoded: encoded.0.map(|v| v as f32),
            bin_index: truth.bin_index.max(0) as u32,
        },
        scenario_id: grid.scenario_id.clone(),
        output_scnr_db: scnr as f32,
    })
}

/// `10 log10( Tr(X^H S^-1 X) / Tr(W^H S^-1 W) )` with `W = C + N`.
pub fn output_scnr(x: &CMatrix, c: &CMatrix, n: &CMatrix, cov: &CovarianceEstimate) -> Result<f64> {
    if x.shape() != c.shape() || c.shape() != n.shape() {
        return Err(Error::argument("signal, clutter and noise matrices differ in shape"));
    }
    let w = c + n;
    let den = frobenius_sq(&whiten(cov, &w)?);
    if den == 0.0 {
        return Err(Error::Domain("zero clutter-plus-noise".into()));
    }
    let num = frobenius_sq(&whiten(cov, x)?);
    if num == 0.0 {
        return Ok(SCNR_FLOOR_DB);
    }
    Ok(10.0 * (num / den).log10())
}

/// Arithmetic mean of per-example output SCNRs in dB.
pub fn mean_output_scnr(values_db: &[f64]) -> Result<f64> {
    if values_db.is_empty() {
        return Err(Error::argument("no SCNR values to average"));
    }
    Ok(values_db.iter().sum::<f64>() / values_db.len() as f64)
}
