use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_detailed, KMeansOptions};
use crate::criteria::InfoCriteria;
use crate::error::{FdError, Result};
use crate::linalg::{argmax_rows, cholesky, column_means, posteriors_from_log_joint, sym_eigen_desc, LN_2PI};
use crate::par;

/// Covariance floor relative to the average total variance per feature.
const COV_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceModel {
    /// `σ_m² I`
    Spherical,
    /// `diag(σ_m1², …, σ_mp²)`
    Diagonal,
    /// Unrestricted `Σ_m`.
    Full,
}

impl CovarianceModel {
    fn n_params(self, p: usize) -> usize {
        match self {
            CovarianceModel::Spherical => 1,
            CovarianceModel::Diagonal => p,
            CovarianceModel::Full => p * (p + 1) / 2,
        }
    }
}

impl FromStr for CovarianceModel {
    type Err = FdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spherical" => Ok(CovarianceModel::Spherical),
            "diagonal" => Ok(CovarianceModel::Diagonal),
            "full" => Ok(CovarianceModel::Full),
            other => Err(FdError::invalid(format!("unknown covariance model '{other}'"))),
        }
    }
}

impl fmt::Display for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceModel::Spherical => "spherical",
            CovarianceModel::Diagonal => "diagonal",
            CovarianceModel::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions {
            tol: 1e-6,
            max_iter: 500,
            restarts: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: CovarianceModel,
    pub weights: Vec<f64>,
    /// `M × p`
    pub means: DMatrix<f64>,
    /// Always stored as full `p × p` matrices.
    pub covariances: Vec<DMatrix<f64>>,
    pub loglik: f64,
    pub posteriors: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub criteria: InfoCriteria,
    /// Log-likelihood at every E-step of the winning restart.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl crate::adaptive::Fitted for GmmFit {
    fn criteria(&self) -> &InfoCriteria {
        &self.criteria
    }
}

impl GmmFit {
    pub fn bic(&self) -> f64 {
        self.criteria.bic
    }

    pub fn n_params(&self) -> usize {
        self.criteria.n_params
    }
}

/// Gaussian mixture fitted by EM, best log-likelihood over `restarts`
/// k-means initialisations.
///
/// Covariance eigenvalues are floored at `1e-8 · tr(S)/p`, with `S` the
/// total sample covariance. The floor is applied inside the M-step as a
/// constrained maximisation, so the likelihood stays monotone.
pub fn gmm_em(x: &DMatrix<f64>, m: usize, model: CovarianceModel, opts: &GmmOptions) -> Result<GmmFit> {
    let (n, p) = x.shape();
    if p == 0 {
        return Err(FdError::invalid("mixture needs at least one feature"));
    }
    if m == 0 || m > n {
        return Err(FdError::invalid(format!(
            "cannot form {m} components from {n} observations"
        )));
    }
    let needed = match model {
        CovarianceModel::Full => p + 1,
        _ => 2,
    };
    if n < needed {
        return Err(FdError::invalid(format!(
            "{model} covariance needs at least {needed} observations, got {n}"
        )));
    }
    let mean = column_means(x);
    let total_trace: f64 = x
        .row_iter()
        .map(|r| (r.transpose() - &mean).norm_squared())
        .sum::<f64>()
        / n as f64;
    let floor = COV_FLOOR * total_trace / p as f64;
    if !(floor > 0.0) {
        return Err(FdError::Singular("data have zero variance".into()));
    }

    let runs = par::map_indexed(opts.restarts.max(1), |r| run(x, m, model, opts, r as u64, floor));
    let mut best: Option<GmmFit> = None;
    let mut first_err = None;
    for res in runs {
        match res {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                log::debug!("mixture restart failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one restart"))
}

struct Params {
    weights: Vec<f64>,
    means: DMatrix<f64>,
    covs: Vec<DMatrix<f64>>,
}

fn run(x: &DMatrix<f64>, m: usize, model: CovarianceModel, opts: &GmmOptions, restart: u64, floor: f64) -> Result<GmmFit> {
    let (n, p) = x.shape();
    let km = kmeans_detailed(
        x,
        m,
        &KMeansOptions {
            restarts: 1,
            max_iter: 300,
            seed: opts.seed.wrapping_add(restart),
        },
    )?;
    let mut post = DMatrix::zeros(n, m);
    for (i, &l) in km.partition.labels.iter().enumerate() {
        post[(i, l)] = 1.0;
    }
    let mut params = m_step(x, &post, model, floor)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut loglik;
    loop {
        let (tau, ll) = e_step(x, &params)?;
        post = tau;
        loglik = ll;
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            trace.push(ll);
            if (ll - prev).abs() < opts.tol * ll.abs().max(1.0) {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if trace.len() > opts.max_iter {
            break;
        }
        params = m_step(x, &post, model, floor)?;
    }
    let n_params = (m - 1) + m * p + m * model.n_params(p);
    Ok(GmmFit {
        model,
        weights: params.weights,
        means: params.means,
        covariances: params.covs,
        loglik,
        labels: argmax_rows(&post),
        criteria: InfoCriteria::new(loglik, n_params, &post),
        posteriors: post,
        trace,
        converged,
    })
}

fn m_step(x: &DMatrix<f64>, post: &DMatrix<f64>, model: CovarianceModel, floor: f64) -> Result<Params> {
    let (n, p) = x.shape();
    let m = post.ncols();
    let mut weights = Vec::with_capacity(m);
    let mut means = DMatrix::zeros(m, p);
    let mut covs = Vec::with_capacity(m);
    for k in 0..m {
        let tau = post.column(k);
        let nk: f64 = tau.sum();
        if !(nk > 1e-10) {
            return Err(FdError::ClusterDeath { cluster: k, mass: nk });
        }
        weights.push(nk / n as f64);
        let mu = x.tr_mul(&tau) / nk;
        let mut centered = x.clone();
        for (i, mut row) in centered.row_iter_mut().enumerate() {
            row -= mu.transpose();
            row *= tau[i].sqrt();
        }
        let s = centered.tr_mul(&centered) / nk;
        let cov = match model {
            CovarianceModel::Full => {
                let (vals, vecs) = sym_eigen_desc(&s);
                let clamped = DVector::from_iterator(p, vals.iter().map(|v| v.max(floor)));
                &vecs * DMatrix::from_diagonal(&clamped) * vecs.transpose()
            }
            CovarianceModel::Diagonal => {
                DMatrix::from_diagonal(&DVector::from_iterator(p, s.diagonal().iter().map(|v| v.max(floor))))
            }
            CovarianceModel::Spherical => DMatrix::identity(p, p) * (s.trace() / p as f64).max(floor),
        };
        means.set_row(k, &mu.transpose());
        covs.push(cov);
    }
    Ok(Params { weights, means, covs })
}

fn e_step(x: &DMatrix<f64>, params: &Params) -> Result<(DMatrix<f64>, f64)> {
    let (n, p) = x.shape();
    let m = params.weights.len();
    let mut log_joint = DMatrix::zeros(n, m);
    for k in 0..m {
        let chol = cholesky(&params.covs[k], "component covariance")?;
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let mut centered = x.transpose();
        for mut col in centered.column_iter_mut() {
            col -= params.means.row(k).transpose();
        }
        let l = chol.l();
        let z = l
            .solve_lower_triangular(&centered)
            .ok_or_else(|| FdError::Singular("component covariance".into()))?;
        let c = params.weights[k].ln() - 0.5 * (p as f64 * LN_2PI + logdet);
        for i in 0..n {
            log_joint[(i, k)] = c - 0.5 * z.column(i).norm_squared();
        }
    }
    posteriors_from_log_joint(&log_joint)
}
