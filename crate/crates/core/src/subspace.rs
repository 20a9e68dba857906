//! Clutter-subspace extraction and the chordal-distance measure of subspace
//! perturbation between two platform locations.

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scene::{ReturnSimulator, Scenario, ScenarioTag};
use crate::stap::{scenario_covariances, CovarianceEstimate, CovarianceSettings};

/// How many leading eigenvectors of a clutter-plus-noise covariance span the
/// clutter subspace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankRule {
    Fixed(usize),
    /// Smallest r capturing `1 - eps` of the eigenvalue mass above the noise
    /// floor.
    Energy(f64),
    /// Eigenvalues above `tau` times the noise floor.
    NoiseFloor(f64),
}

impl Default for RankRule {
    fn default() -> Self {
        RankRule::NoiseFloor(10.0)
    }
}

impl std::str::FromStr for RankRule {
    type Err = Error;

    /// `fixed:<r>`, `energy:<eps>` or `noise_floor:<tau>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::argument(format!("rank rule `{s}` is not <kind>:<value>")))?;
        let bad = || Error::argument(format!("bad rank rule value in `{s}`"));
        match kind.trim() {
            "fixed" => Ok(RankRule::Fixed(value.trim().parse().map_err(|_| bad())?)),
            "energy" => Ok(RankRule::Energy(value.trim().parse().map_err(|_| bad())?)),
            "noise_floor" => Ok(RankRule::NoiseFloor(value.trim().parse().map_err(|_| bad())?)),
            other => Err(Error::argument(format!("unknown rank rule `{other}`"))),
        }
    }
}

impl std::fmt::Display for RankRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RankRule::Fixed(r) => write!(f, "fixed:{r}"),
            RankRule::Energy(e) => write!(f, "energy:{e}"),
            RankRule::NoiseFloor(t) => write!(f, "noise_floor:{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    /// L x r, orthonormal columns by descending eigenvalue.
    pub basis: CMatrix,
    pub rank: usize,
    /// All L eigenvalues, descending.
    pub singular_values: Vec<f64>,
    /// Full eigenvector matrix, so a basis can be truncated to any rank.
    vectors: CMatrix,
}

impl SubspaceBasis {
    /// Wraps an `L x r` matrix with orthonormal columns. Only ranks up to `r`
    /// are available through [`SubspaceBasis::leading`].
    pub fn from_orthonormal(u: CMatrix) -> Result<Self> {
        let r = u.ncols();
        let defect = (u.adjoint() * &u - CMatrix::identity(r, r)).norm();
        if r > u.nrows() || !(defect < 1e-8) {
            return Err(Error::argument(format!("columns are not orthonormal (defect {defect:.3e})")));
        }
        Ok(Self {
            basis: u.clone(),
            rank: r,
            singular_values: vec![1.0; r],
            vectors: u,
        })
    }

    /// Leading `r` eigenvectors.
    pub fn leading(&self, r: usize) -> Result<CMatrix> {
        if r > self.vectors.ncols() {
            return Err(Error::argument(format!("rank {r} exceeds dimension {}", self.vectors.ncols())));
        }
        Ok(self.vectors.columns(0, r).into_owned())
    }
}

/// Median of the smallest quarter of the (descending) eigenvalues.
pub fn noise_floor(eigenvalues: &[f64]) -> f64 {
    let n = eigenvalues.len();
    let q = n.div_ceil(4).max(1);
    let mut tail: Vec<f64> = eigenvalues[n - q..].to_vec();
    tail.sort_by(f64::total_cmp);
    if q % 2 == 1 {
        tail[q / 2]
    } else {
        0.5 * (tail[q / 2 - 1] + tail[q / 2])
    }
}

pub fn select_rank(eigenvalues: &[f64], rule: RankRule) -> Result<usize> {
    let l = eigenvalues.len();
    match rule {
        RankRule::Fixed(r) => {
            if r > l {
                Err(Error::argument(format!("requested rank {r} exceeds dimension {l}")))
            } else {
                Ok(r)
            }
        }
        RankRule::NoiseFloor(tau) => {
            let floor = noise_floor(eigenvalues);
            Ok(eigenvalues.iter().filter(|&&v| v > tau * floor).count())
        }
        RankRule::Energy(eps) => {
            let floor = noise_floor(eigenvalues);
            let excess: Vec<f64> = eigenvalues.iter().map(|v| (v - floor).max(0.0)).collect();
            let total: f64 = excess.iter().sum();
            if total <= 0.0 {
                return Ok(0);
            }
            let mut acc = 0.0;
            for (i, e) in excess.iter().enumerate() {
                acc += e;
                if acc >= (1.0 - eps) * total {
                    return Ok(i + 1);
                }
            }
            Ok(l)
        }
    }
}

pub fn clutter_basis(cov: &CovarianceEstimate, rule: RankRule) -> Result<SubspaceBasis> {
    let r = select_rank(&cov.eigenvalues, rule)?;
    Ok(SubspaceBasis {
        basis: cov.eigenvectors.columns(0, r).into_owned(),
        rank: r,
        singular_values: cov.eigenvalues.clone(),
        vectors: cov.eigenvectors.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChordalResult {
    pub distance: f64,
    pub rank_used: usize,
    /// `Tr(J_D J_O J_D)`.
    pub trace_term: f64,
    /// Radians, ascending.
    pub principal_angles: Vec<f64>,
}

impl ChordalResult {
    pub fn normalized(&self) -> f64 {
        if self.rank_used == 0 {
            0.0
        } else {
            self.distance / self.rank_used as f64
        }
    }
}

/// Principal angles between the column spans of two orthonormal matrices,
/// from the singular values of their cross-Gram matrix.
pub fn principal_angles(u: &CMatrix, v: &CMatrix) -> Vec<f64> {
    let cross = u.adjoint() * v;
    let svd = cross.svd(false, false);
    let mut angles: Vec<f64> = svd.singular_values.iter().map(|s| s.clamp(0.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    angles
}

/// `r - Tr(J_D J_O J_D)` with `J = U U^H` over the leading `r` basis vectors.
pub fn chordal_distance(origin: &SubspaceBasis, displaced: &SubspaceBasis, r: usize) -> Result<ChordalResult> {
    if r == 0 {
        return Err(Error::argument("chordal distance needs r >= 1"));
    }
    let uo = origin.leading(r)?;
    let ud = displaced.leading(r)?;
    let jo = &uo * uo.adjoint();
    let jd = &ud * ud.adjoint();
    let jdo = &jd * &jo;
    let trace = (&jdo * &jd).trace();
    debug_assert!(trace.im.abs() < 1e-10, "imaginary trace residue {}", trace.im);
    debug_assert!((trace.re - jdo.trace().re).abs() < 1e-10 * (r as f64).max(1.0));
    let distance = (r as f64 - trace.re).clamp(0.0, r as f64);
    Ok(ChordalResult {
        distance,
        rank_used: r,
        trace_term: trace.re,
        principal_angles: principal_angles(&uo, &ud),
    })
}

/// How per-bin distances combine into one number per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinPolicy {
    #[default]
    Mean,
    Center,
}

impl std::str::FromStr for BinPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean" => Ok(BinPolicy::Mean),
            "center" => Ok(BinPolicy::Center),
            other => Err(Error::argument(format!("unknown bin policy `{other}`"))),
        }
    }
}

impl std::fmt::Display for BinPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinPolicy::Mean => "mean",
            BinPolicy::Center => "center",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseChordal {
    pub tag: ScenarioTag,
    pub distance: f64,
    pub normalized: f64,
    pub per_bin: Vec<ChordalResult>,
}

/// Distances between each displaced scenario's clutter bases and the
/// original's, bin by bin. The rank of every bin comes from the original
/// scenario and is applied to both sides.
pub fn pairwise_from_covariances(
    original: &[CovarianceEstimate],
    displaced: &[(ScenarioTag, Vec<CovarianceEstimate>)],
    policy: BinPolicy,
    rule: RankRule,
) -> Result<Vec<PairwiseChordal>> {
    let origin_bases: Vec<SubspaceBasis> = original.iter().map(|c| clutter_basis(c, rule)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(displaced.len());
    for (tag, covs) in displaced {
        if covs.len() != original.len() {
            return Err(Error::argument(format!("scenario {tag} has {} bins, original has {}", covs.len(), original.len())));
        }
        let per_bin: Vec<ChordalResult> = origin_bases
            .iter()
            .zip(covs)
            .map(|(ob, dc)| {
                let db = clutter_basis(dc, RankRule::Fixed(ob.rank))?;
                if ob.rank == 0 {
                    Ok(ChordalResult {
                        distance: 0.0,
                        rank_used: 0,
                        trace_term: 0.0,
                        principal_angles: Vec::new(),
                    })
                } else {
                    chordal_distance(ob, &db, ob.rank)
                }
            })
            .collect::<Result<_>>()?;
        let pick = |f: &dyn Fn(&ChordalResult) -> f64| match policy {
            BinPolicy::Mean => per_bin.iter().map(f).sum::<f64>() / per_bin.len() as f64,
            BinPolicy::Center => f(&per_bin[per_bin.len() / 2]),
        };
        out.push(PairwiseChordal {
            tag: *tag,
            distance: pick(&|c| c.distance),
            normalized: pick(&|c| c.normalized()),
            per_bin,
        });
    }
    Ok(out)
}

/// Chordal distance of every scenario after the first (the original) to the
/// first.
pub fn pairwise_chordal(
    scenarios: &[Scenario],
    policy: BinPolicy,
    rule: RankRule,
    settings: &CovarianceSettings,
) -> Result<Vec<PairwiseChordal>> {
    if scenarios.len() < 2 {
        return Err(Error::argument("pairwise chordal distance needs an original and at least one displacement"));
    }
    let covs: Vec<Vec<CovarianceEstimate>> = scenarios
        .iter()
        .map(|s| scenario_covariances(&ReturnSimulator::new(s), settings))
        .collect::<Result<_>>()?;
    let displaced: Vec<(ScenarioTag, Vec<CovarianceEstimate>)> =
        scenarios[1..].iter().zip(covs[1..].iter().cloned()).map(|(s, c)| (s.tag, c)).collect();
    pairwise_from_covariances(&covs[0], &displaced, policy, rule)
}
