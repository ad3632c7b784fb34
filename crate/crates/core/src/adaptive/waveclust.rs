//! Wavelet-domain mixed model.
//!
//! Each curve is padded to dyadic length and Haar-transformed to
//! `y_i ∈ ℝᴺ`. Within cluster `m`, `y_i = θ_m + u_i + e_i` where `e_i` is
//! white noise of variance `σ²` and the random deviation `u_i` has diagonal
//! covariance `γ² I` (constant) or `γ_m² I` (group) on every coefficient
//! except the finest detail level. Leaving the finest level to the noise
//! alone is what makes `γ²` and `σ²` separately estimable.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::wavelet::{haar_dwt, hard_threshold, pad_dyadic, universal_threshold};
use super::{best_restart, has_converged, initial_responsibilities, EmOptions, Fitted};
use crate::criteria::InfoCriteria;
use crate::curves::CurveSet;
use crate::error::{FdError, Result};
use crate::linalg::{argmax_rows, posteriors_from_log_joint, total_variance, LN_2PI};
use crate::par;

const VAR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceStructure {
    Constant,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveclustOptions {
    pub em: EmOptions,
    /// `None` fits both structures and keeps the lower BIC.
    pub structure: Option<VarianceStructure>,
    /// Hard-threshold each curve's details before clustering.
    pub denoise: bool,
    /// When false the random-effect variance is held at zero.
    pub random_effects: bool,
}

impl Default for WaveclustOptions {
    fn default() -> Self {
        WaveclustOptions {
            em: EmOptions::default(),
            structure: None,
            denoise: false,
            random_effects: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WaveletModel {
    pub structure: VarianceStructure,
    /// Original curve length before padding.
    pub n_points: usize,
    /// Cluster mean wavelet coefficients (scaling then details, `M × N`).
    pub means: DMatrix<f64>,
    /// Random-effect variance, one entry (constant) or one per cluster (group).
    pub gamma2: Vec<f64>,
    pub sigma2: f64,
    pub weights: Vec<f64>,
    pub posteriors: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub criteria: InfoCriteria,
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl Fitted for WaveletModel {
    fn criteria(&self) -> &InfoCriteria {
        &self.criteria
    }
}

impl WaveletModel {
    fn gamma2_of(&self, c: usize) -> f64 {
        match self.structure {
            VarianceStructure::Constant => self.gamma2[0],
            VarianceStructure::Group => self.gamma2[c],
        }
    }

    /// Per-coefficient variances of cluster `c`.
    pub fn coefficient_variances(&self, c: usize) -> Vec<f64> {
        let n = self.means.ncols();
        let v = self.sigma2 + self.gamma2_of(c);
        (0..n).map(|j| if j < coarse_len(n) { v } else { self.sigma2 }).collect()
    }

    /// Cluster mean curves in the time domain, padding removed.
    pub fn mean_curves(&self) -> Result<DMatrix<f64>> {
        let (mm, _) = self.means.shape();
        let mut out = DMatrix::zeros(mm, self.n_points);
        for c in 0..mm {
            let coeffs = super::wavelet::HaarCoefficients::from_vec(self.means.row(c).transpose().as_slice())?;
            let y = super::wavelet::haar_idwt(&coeffs)?;
            for t in 0..self.n_points {
                out[(c, t)] = y[t];
            }
        }
        Ok(out)
    }
}

/// Number of leading coefficients carrying a random effect.
fn coarse_len(n: usize) -> usize {
    if n >= 2 {
        n / 2
    } else {
        n
    }
}

/// `n × N` wavelet coefficients of the (padded) curves.
pub fn wavelet_features(cs: &CurveSet, denoise: bool) -> Result<DMatrix<f64>> {
    let n = cs.n_curves();
    let rows = par::map_indexed(n, |i| -> Result<Vec<f64>> {
        let mut c = haar_dwt(&pad_dyadic(&cs.curve(i)))?;
        if denoise {
            let thr = universal_threshold(&c);
            c = hard_threshold(&c, thr)?;
        }
        Ok(c.to_vec())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let width = rows[0].len();
    Ok(DMatrix::from_row_iterator(n, width, rows.into_iter().flatten()))
}

pub fn waveclust_em(cs: &CurveSet, m: usize, opts: &WaveclustOptions) -> Result<WaveletModel> {
    let y = wavelet_features(cs, opts.denoise)?;
    let mut model = waveclust_em_on_coefficients(&y, m, opts)?;
    model.n_points = cs.n_points();
    Ok(model)
}

/// Fit on precomputed wavelet coefficients (`n × N`, `N` a power of two).
pub fn waveclust_em_on_coefficients(y: &DMatrix<f64>, m: usize, opts: &WaveclustOptions) -> Result<WaveletModel> {
    let nn = y.ncols();
    if nn < 2 || !nn.is_power_of_two() {
        return Err(FdError::invalid(format!("{nn} wavelet coefficients is not a dyadic length ≥ 2")));
    }
    let structures = match opts.structure {
        Some(s) => vec![s],
        None => vec![VarianceStructure::Constant, VarianceStructure::Group],
    };
    let floor = VAR_FLOOR * total_variance(y).max(f64::MIN_POSITIVE);
    let mut best: Option<WaveletModel> = None;
    let mut first_err = None;
    for s in structures {
        let runs = par::map_indexed(opts.em.restarts.max(1), |r| {
            let tau = initial_responsibilities(y, m, &opts.em, r)?;
            run(y, tau, s, opts, floor)
        });
        match best_restart(runs, "waveclust") {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.criteria.bic < b.criteria.bic) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one structure"))
}

struct Params {
    means: DMatrix<f64>,
    gamma2: Vec<f64>,
    sigma2: f64,
    weights: Vec<f64>,
}

fn e_step(y: &DMatrix<f64>, p: &Params, structure: VarianceStructure) -> Result<DMatrix<f64>> {
    let (n, nn) = y.shape();
    let nc = coarse_len(nn);
    let nf = nn - nc;
    let mm = p.weights.len();
    let mut lj = DMatrix::zeros(n, mm);
    for c in 0..mm {
        let g = match structure {
            VarianceStructure::Constant => p.gamma2[0],
            VarianceStructure::Group => p.gamma2[c],
        };
        let v = p.sigma2 + g;
        let base = nn as f64 * LN_2PI + nc as f64 * v.ln() + nf as f64 * p.sigma2.ln();
        let lw = p.weights[c].ln();
        for i in 0..n {
            let (mut rc, mut rf) = (0.0, 0.0);
            for j in 0..nn {
                let e = y[(i, j)] - p.means[(c, j)];
                if j < nc {
                    rc += e * e;
                } else {
                    rf += e * e;
                }
            }
            lj[(i, c)] = lw - 0.5 * (base + rc / v + rf / p.sigma2);
        }
    }
    Ok(lj)
}

/// Closed-form M-step. The variance update maximises
/// `−½ Σ [n_f log σ² + R_f/σ² + n_c,m log v_m + R_c,m/v_m]` subject to
/// `v_m ≥ σ² ≥ floor`, which is convex in the precisions.
fn m_step(
    y: &DMatrix<f64>,
    tau: &DMatrix<f64>,
    structure: VarianceStructure,
    random_effects: bool,
    floor: f64,
) -> Result<Params> {
    let (n, nn) = y.shape();
    let nc = coarse_len(nn);
    let mm = tau.ncols();
    let mut means = DMatrix::zeros(mm, nn);
    let mut weights = Vec::with_capacity(mm);
    let mut rc = vec![0.0; mm];
    let mut cc = vec![0.0; mm];
    let mut rf = 0.0;
    let mut cf = 0.0;
    for c in 0..mm {
        let t = tau.column(c);
        let mass: f64 = t.sum();
        if !(mass > 1e-10) {
            return Err(FdError::ClusterDeath { cluster: c, mass });
        }
        weights.push(mass / n as f64);
        let mu = y.tr_mul(&t) / mass;
        for i in 0..n {
            for j in 0..nn {
                let e = y[(i, j)] - mu[j];
                if j < nc {
                    rc[c] += t[i] * e * e;
                } else {
                    rf += t[i] * e * e;
                }
            }
        }
        cc[c] = mass * nc as f64;
        cf += mass * (nn - nc) as f64;
        means.set_row(c, &mu.transpose());
    }

    // groups of coarse blocks whose variance is free (not tied to σ²)
    let blocks: Vec<(f64, f64)> = match structure {
        VarianceStructure::Constant => vec![(rc.iter().sum(), cc.iter().sum())],
        VarianceStructure::Group => rc.iter().copied().zip(cc.iter().copied()).collect(),
    };
    let (sigma2, v) = if random_effects {
        constrained_variances(rf, cf, &blocks, floor)
    } else {
        let s = ((rf + rc.iter().sum::<f64>()) / (cf + cc.iter().sum::<f64>())).max(floor);
        (s, vec![s; blocks.len()])
    };
    Ok(Params {
        means,
        gamma2: v.iter().map(|v| (v - sigma2).max(0.0)).collect(),
        sigma2,
        weights,
    })
}

/// Maximise over `σ²` and block variances `v_b ≥ σ² ≥ floor`.
fn constrained_variances(rf: f64, cf: f64, blocks: &[(f64, f64)], floor: f64) -> (f64, Vec<f64>) {
    let ratio = |r: f64, c: f64| if c > 0.0 { r / c } else { 0.0 };
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&a, &b| ratio(blocks[a].0, blocks[a].1).total_cmp(&ratio(blocks[b].0, blocks[b].1)));
    let mut sigma2 = ratio(rf, cf);
    // pool the blocks with the smallest free variance into σ² until the KKT
    // conditions hold
    for j in 0..=order.len() {
        let (r, c) = order[..j]
            .iter()
            .fold((rf, cf), |acc, &b| (acc.0 + blocks[b].0, acc.1 + blocks[b].1));
        let s = ratio(r, c);
        let pooled_ok = order[..j].iter().all(|&b| ratio(blocks[b].0, blocks[b].1) <= s);
        let free_ok = order[j..].iter().all(|&b| ratio(blocks[b].0, blocks[b].1) >= s);
        if pooled_ok && free_ok {
            sigma2 = s;
            break;
        }
    }
    let sigma2 = sigma2.max(floor);
    let v = blocks.iter().map(|&(r, c)| ratio(r, c).max(sigma2)).collect();
    (sigma2, v)
}

fn run(
    y: &DMatrix<f64>,
    tau0: DMatrix<f64>,
    structure: VarianceStructure,
    opts: &WaveclustOptions,
    floor: f64,
) -> Result<WaveletModel> {
    let mut params = m_step(y, &tau0, structure, opts.random_effects, floor)?;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let (post, loglik) = loop {
        let (tau, ll) = posteriors_from_log_joint(&e_step(y, &params, structure)?)?;
        let prev = trace.last().copied();
        trace.push(ll);
        if prev.is_some_and(|p| has_converged(p, ll, opts.em.tol)) {
            converged = true;
            break (tau, ll);
        }
        if trace.len() > opts.em.max_iter {
            break (tau, ll);
        }
        params = m_step(y, &tau, structure, opts.random_effects, floor)?;
    };
    let (mm, nn) = params.means.shape();
    let var_params = 1 + match (opts.random_effects, structure) {
        (false, _) => 0,
        (true, VarianceStructure::Constant) => 1,
        (true, VarianceStructure::Group) => mm,
    };
    let n_params = (mm - 1) + mm * nn + var_params;
    Ok(WaveletModel {
        structure,
        n_points: nn,
        means: params.means,
        gamma2: params.gamma2,
        sigma2: params.sigma2,
        weights: params.weights,
        labels: argmax_rows(&post),
        criteria: InfoCriteria::new(loglik, n_params, &post),
        posteriors: post,
        trace,
        converged,
    })
}
