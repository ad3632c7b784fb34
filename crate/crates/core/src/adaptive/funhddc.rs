//! Group-specific functional subspaces.
//!
//! Coefficients are mapped to `y = Lᵀ c` (with `W = L Lᵀ`) so Euclidean
//! geometry in `y` is the `L²` geometry of the curves. Group `m` is Gaussian
//! with covariance `Q_m Δ_m Q_mᵀ`, `Δ_m = diag(a_m1, …, a_md, b_m, …, b_m)`:
//! `d_m` signal directions plus isotropic noise in the orthogonal
//! complement. `d_m` comes from Cattell's scree test at every M-step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{best_restart, has_converged, initial_responsibilities, EmOptions, Fitted};
use crate::basis::CoefficientSet;
use crate::criteria::InfoCriteria;
use crate::error::{FdError, Result};
use crate::linalg::{argmax_rows, cholesky, posteriors_from_log_joint, sym_eigen_desc, LN_2PI};
use crate::par;

const VAR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HddcSubmodel {
    /// Group-specific `a_mj`, `b_m`, `Q_m`, `d_m`.
    #[default]
    Full,
    /// As `Full` but one noise variance `b` shared by all groups.
    CommonNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HddcMetric {
    /// `y = Lᵀ c`
    #[default]
    Gram,
    /// `y = c`
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FunHddcOptions {
    pub em: EmOptions,
    /// Scree-test threshold in `(0, 1]`.
    pub threshold: f64,
    pub submodel: HddcSubmodel,
    pub metric: HddcMetric,
}

impl Default for FunHddcOptions {
    fn default() -> Self {
        FunHddcOptions {
            em: EmOptions {
                restarts: 20,
                ..EmOptions::default()
            },
            threshold: 0.2,
            submodel: HddcSubmodel::Full,
            metric: HddcMetric::Gram,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HddcGroup {
    pub mean: DVector<f64>,
    /// Orthogonal; the first `d` columns span the signal subspace.
    pub q: DMatrix<f64>,
    pub d: usize,
    /// Signal variances, length `d`, each `≥ b`.
    pub a: Vec<f64>,
    pub b: f64,
}

impl HddcGroup {
    pub fn log_density(&self, y: &DVector<f64>) -> f64 {
        let k = y.len();
        let e = y - &self.mean;
        let ee = e.norm_squared();
        let mut proj = 0.0;
        let mut quad = 0.0;
        let mut logdet = (k - self.d) as f64 * self.b.ln();
        for j in 0..self.d {
            let p = self.q.column(j).dot(&e);
            proj += p * p;
            quad += p * p / self.a[j];
            logdet += self.a[j].ln();
        }
        quad += (ee - proj).max(0.0) / self.b;
        -0.5 * (k as f64 * LN_2PI + logdet + quad)
    }

    /// `Q Δ Qᵀ`
    pub fn covariance(&self) -> DMatrix<f64> {
        let k = self.mean.len();
        let diag = DVector::from_iterator(k, (0..k).map(|j| if j < self.d { self.a[j] } else { self.b }));
        &self.q * DMatrix::from_diagonal(&diag) * self.q.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct FunHddcModel {
    pub groups: Vec<HddcGroup>,
    pub weights: Vec<f64>,
    /// Maps coefficient rows to model coordinates: `Y = C · transform`.
    pub transform: DMatrix<f64>,
    pub submodel: HddcSubmodel,
    pub metric: HddcMetric,
    pub threshold: f64,
    pub posteriors: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub criteria: InfoCriteria,
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl Fitted for FunHddcModel {
    fn criteria(&self) -> &InfoCriteria {
        &self.criteria
    }
}

impl FunHddcModel {
    pub fn dims(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.d).collect()
    }

    /// Group means mapped back to basis coefficients (`M × K`).
    pub fn mean_coefficients(&self) -> Result<DMatrix<f64>> {
        let k = self.transform.nrows();
        let inv = self
            .transform
            .clone()
            .try_inverse()
            .ok_or_else(|| FdError::Singular("coefficient transform".into()))?;
        let mut out = DMatrix::zeros(self.groups.len(), k);
        for (c, g) in self.groups.iter().enumerate() {
            out.set_row(c, &(g.mean.transpose() * &inv));
        }
        Ok(out)
    }
}

/// Largest `j` whose gap `λ_j − λ_{j+1}` reaches `threshold` times the
/// largest gap; `1` when there is no gap at all.
pub fn scree_dimension(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if eigenvalues.len() < 2 {
        return Err(FdError::invalid("scree test needs at least two eigenvalues"));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(FdError::invalid(format!("scree threshold {threshold} outside (0, 1]")));
    }
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(FdError::NonFinite("eigenvalue".into()));
    }
    let gaps: Vec<f64> = eigenvalues.windows(2).map(|w| w[0] - w[1]).collect();
    let max = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        log::debug!("scree test found no eigenvalue gap, using one dimension");
        return Ok(1);
    }
    Ok(gaps
        .iter()
        .rposition(|&g| g >= threshold * max)
        .map(|j| j + 1)
        .unwrap_or(1))
}

/// Weighted moments of one group.
struct GroupStats {
    mass: f64,
    mean: DVector<f64>,
    eigenvalues: Vec<f64>,
    vectors: DMatrix<f64>,
}

fn group_stats(y: &DMatrix<f64>, tau: &DMatrix<f64>) -> Result<Vec<GroupStats>> {
    let k = y.ncols();
    (0..tau.ncols())
        .map(|c| {
            let t = tau.column(c);
            let mass: f64 = t.sum();
            if !(mass >= k as f64 * f64::EPSILON) {
                return Err(FdError::ClusterDeath { cluster: c, mass });
            }
            let mean = y.tr_mul(&t) / mass;
            let mut centered = y.clone();
            for (i, mut row) in centered.row_iter_mut().enumerate() {
                row -= mean.transpose();
                row *= t[i].sqrt();
            }
            let s = centered.tr_mul(&centered) / mass;
            let (vals, vectors) = sym_eigen_desc(&s);
            Ok(GroupStats {
                mass,
                mean,
                eigenvalues: vals.iter().map(|v| v.max(0.0)).collect(),
                vectors,
            })
        })
        .collect()
}

struct Params {
    groups: Vec<HddcGroup>,
    weights: Vec<f64>,
}

/// Maximiser of the expected complete log-likelihood for given dimensions.
fn params_for(stats: &[GroupStats], dims: &[usize], submodel: HddcSubmodel, floor: f64, n: usize) -> Params {
    let k = stats[0].mean.len();
    let rest = |s: &GroupStats, d: usize| s.eigenvalues[d..].iter().sum::<f64>();
    let pooled_b = match submodel {
        HddcSubmodel::CommonNoise => {
            let num: f64 = stats.iter().zip(dims).map(|(s, &d)| s.mass * rest(s, d)).sum();
            let den: f64 = stats.iter().zip(dims).map(|(s, &d)| s.mass * (k - d) as f64).sum();
            Some((num / den).max(floor))
        }
        HddcSubmodel::Full => None,
    };
    let groups = stats
        .iter()
        .zip(dims)
        .map(|(s, &d)| {
            let b = pooled_b.unwrap_or_else(|| (rest(s, d) / (k - d) as f64).max(floor));
            HddcGroup {
                mean: s.mean.clone(),
                q: s.vectors.clone(),
                d,
                a: s.eigenvalues[..d].iter().map(|&l| l.max(b)).collect(),
                b,
            }
        })
        .collect();
    Params {
        groups,
        weights: stats.iter().map(|s| s.mass / n as f64).collect(),
    }
}

fn log_joint(y: &DMatrix<f64>, p: &Params) -> DMatrix<f64> {
    let n = y.nrows();
    let mut lj = DMatrix::zeros(n, p.groups.len());
    for (c, g) in p.groups.iter().enumerate() {
        let lw = p.weights[c].ln();
        for i in 0..n {
            lj[(i, c)] = lw + g.log_density(&y.row(i).transpose());
        }
    }
    lj
}

/// Per-group expected complete log-likelihood `Σ_i τ_ic log(π_c f_c(y_i))`.
fn q_by_group(lj: &DMatrix<f64>, tau: &DMatrix<f64>) -> Vec<f64> {
    (0..tau.ncols())
        .map(|c| {
            tau.column(c)
                .iter()
                .zip(lj.column(c).iter())
                .filter(|(t, _)| **t > 0.0)
                .map(|(t, l)| t * l)
                .sum()
        })
        .collect()
}

/// Generalised M-step: dimensions from the scree test, except where keeping
/// the previous dimensions gives a larger expected log-likelihood. Falls
/// back to the current parameters if neither candidate improves on them.
fn m_step(
    y: &DMatrix<f64>,
    tau: &DMatrix<f64>,
    prev: Option<(&Params, &DMatrix<f64>)>,
    opts: &FunHddcOptions,
    floor: f64,
) -> Result<Params> {
    let n = y.nrows();
    let k = y.ncols();
    let stats = group_stats(y, tau)?;
    let scree: Vec<usize> = stats
        .iter()
        .map(|s| scree_dimension(&s.eigenvalues, opts.threshold).map(|d| d.min(k - 1)))
        .collect::<Result<_>>()?;
    let cand = params_for(&stats, &scree, opts.submodel, floor, n);
    let Some((old, old_lj)) = prev else {
        return Ok(cand);
    };
    let q_scree = q_by_group(&log_joint(y, &cand), tau);
    let old_dims: Vec<usize> = old.groups.iter().map(|g| g.d).collect();
    let mut best = cand;
    let mut q_best = q_scree.iter().sum::<f64>();
    if old_dims != scree {
        let keep = params_for(&stats, &old_dims, opts.submodel, floor, n);
        let q_keep = q_by_group(&log_joint(y, &keep), tau);
        match opts.submodel {
            HddcSubmodel::Full => {
                let dims: Vec<usize> = (0..stats.len())
                    .map(|c| if q_keep[c] > q_scree[c] { old_dims[c] } else { scree[c] })
                    .collect();
                if dims != scree {
                    best = params_for(&stats, &dims, opts.submodel, floor, n);
                    q_best = q_by_group(&log_joint(y, &best), tau).iter().sum();
                }
            }
            HddcSubmodel::CommonNoise => {
                let total: f64 = q_keep.iter().sum();
                if total > q_best {
                    best = keep;
                    q_best = total;
                }
            }
        }
    }
    let q_old: f64 = q_by_group(old_lj, tau).iter().sum();
    if q_best < q_old {
        return Ok(Params {
            groups: old.groups.clone(),
            weights: old.weights.clone(),
        });
    }
    Ok(best)
}

pub fn funhddc_em(coeffs: &CoefficientSet, m: usize, opts: &FunHddcOptions) -> Result<FunHddcModel> {
    let k = coeffs.basis.n_basis();
    if k < 2 {
        return Err(FdError::invalid("subspace clustering needs at least two basis functions"));
    }
    scree_dimension(&[1.0, 0.0], opts.threshold)?;
    let transform = match opts.metric {
        HddcMetric::Gram => cholesky(coeffs.basis.gram(), "basis Gram matrix")?.l(),
        HddcMetric::Raw => DMatrix::identity(k, k),
    };
    let y = &coeffs.coefficients * &transform;
    let mean = y.row_mean();
    let avg_var = y
        .row_iter()
        .map(|r| (r - &mean).norm_squared())
        .sum::<f64>()
        / (y.nrows() * k) as f64;
    let floor = VAR_FLOOR * avg_var.max(f64::MIN_POSITIVE);
    let runs = par::map_indexed(opts.em.restarts.max(1), |r| {
        let tau = initial_responsibilities(&y, m, &opts.em, r)?;
        run(&y, tau, opts, floor, &transform)
    });
    best_restart(runs, "funhddc")
}

fn run(y: &DMatrix<f64>, tau0: DMatrix<f64>, opts: &FunHddcOptions, floor: f64, transform: &DMatrix<f64>) -> Result<FunHddcModel> {
    let k = y.ncols();
    let mut params = m_step(y, &tau0, None, opts, floor)?;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let (post, loglik) = loop {
        let lj = log_joint(y, &params);
        let (tau, ll) = posteriors_from_log_joint(&lj)?;
        let prev = trace.last().copied();
        trace.push(ll);
        if prev.is_some_and(|p| has_converged(p, ll, opts.em.tol)) {
            converged = true;
            break (tau, ll);
        }
        if trace.len() > opts.em.max_iter {
            break (tau, ll);
        }
        params = m_step(y, &tau, Some((&params, &lj)), opts, floor)?;
    };
    let mm = params.groups.len();
    let orientation: usize = params.groups.iter().map(|g| g.d * k - g.d * (g.d + 1) / 2).sum();
    let signal: usize = params.groups.iter().map(|g| g.d).sum();
    let noise = match opts.submodel {
        HddcSubmodel::Full => mm,
        HddcSubmodel::CommonNoise => 1,
    };
    let n_params = (mm - 1) + mm * k + orientation + signal + noise;
    Ok(FunHddcModel {
        groups: params.groups,
        weights: params.weights,
        transform: transform.clone(),
        submodel: opts.submodel,
        metric: opts.metric,
        threshold: opts.threshold,
        labels: argmax_rows(&post),
        criteria: InfoCriteria::new(loglik, n_params, &post),
        posteriors: post,
        trace,
        converged,
    })
}
