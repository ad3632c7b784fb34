//! Spline mixed-effects mixture on a common grid.
//!
//! A curve from cluster `m` is `x = S(μ_m + γ) + ε` with `γ ~ N(0, Γ)` and
//! `ε ~ N(0, σ² I)`, so its marginal covariance is `σ² I + S Γ Sᵀ`. With
//! `Γ = G Gᵀ` every density and conditional moment is evaluated in
//! coefficient space through `H = σ² I + Gᵀ B G`, `B = Sᵀ S`:
//!
//! * `log |Σ| = (m − K) log σ² + log |H|`
//! * `eᵀ Σ⁻¹ e = (‖e‖² − uᵀ H⁻¹ u) / σ²` with `u = Gᵀ Sᵀ e`
//! * `E[γ | x] = G H⁻¹ u`, `Var[γ | x] = σ² G H⁻¹ Gᵀ`

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{best_restart, has_converged, initial_responsibilities, EmOptions, Fitted};
use crate::basis::BasisSystem;
use crate::criteria::InfoCriteria;
use crate::curves::CurveSet;
use crate::error::{FdError, Result};
use crate::linalg::{argmax_rows, cholesky, posteriors_from_log_joint, project_psd, psd_factor, total_variance, LN_2PI};
use crate::par;

const VAR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FclustOptions {
    pub em: EmOptions,
    /// When false `Γ` is held at zero and the model is a plain
    /// fixed-effects spline mixture.
    pub random_effects: bool,
}

impl Default for FclustOptions {
    fn default() -> Self {
        FclustOptions {
            em: EmOptions::default(),
            random_effects: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FclustModel {
    pub grid: Vec<f64>,
    pub basis: BasisSystem,
    /// Cluster mean coefficients, one per row (`M × K`).
    pub mu: DMatrix<f64>,
    /// Random-effect covariance `Γ` (`K × K`, PSD).
    pub gamma: DMatrix<f64>,
    pub sigma: f64,
    pub weights: Vec<f64>,
    pub posteriors: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub criteria: InfoCriteria,
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl Fitted for FclustModel {
    fn criteria(&self) -> &InfoCriteria {
        &self.criteria
    }
}

/// Data summaries that every E- and M-step reuses.
struct Design {
    m_pts: usize,
    b: DMatrix<f64>,
    /// `Sᵀ x_i` as columns (`K × n`).
    stx: DMatrix<f64>,
    /// `‖x_i‖²`
    xx: Vec<f64>,
}

impl Design {
    fn new(basis: &BasisSystem, grid: &[f64], values: &DMatrix<f64>) -> Result<Self> {
        let s = basis.eval(grid, 0)?;
        Ok(Design {
            m_pts: grid.len(),
            b: s.tr_mul(&s),
            stx: s.tr_mul(&values.transpose()),
            xx: values.row_iter().map(|r| r.norm_squared()).collect(),
        })
    }

    fn n(&self) -> usize {
        self.xx.len()
    }

    fn k(&self) -> usize {
        self.b.nrows()
    }
}

#[derive(Clone)]
struct Params {
    mu: DMatrix<f64>,
    gamma: DMatrix<f64>,
    sigma2: f64,
    weights: Vec<f64>,
}

struct Moments {
    /// Conditional random-effect means per cluster (`K × n` each).
    gamma_hat: Vec<DMatrix<f64>>,
    /// Conditional covariance, shared by every curve and cluster.
    v: DMatrix<f64>,
}

fn e_step(d: &Design, p: &Params) -> Result<(DMatrix<f64>, Moments)> {
    let (n, k) = (d.n(), d.k());
    let mm = p.weights.len();
    let g = psd_factor(&p.gamma);
    let h = DMatrix::identity(k, k) * p.sigma2 + g.transpose() * &d.b * &g;
    let hc = cholesky(&h, "random-effect system")?;
    let logdet_h = 2.0 * hc.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let base = d.m_pts as f64 * LN_2PI + (d.m_pts - k) as f64 * p.sigma2.ln() + logdet_h;
    let mut log_joint = DMatrix::zeros(n, mm);
    let mut gamma_hat = Vec::with_capacity(mm);
    for c in 0..mm {
        let mu = p.mu.row(c).transpose();
        let bmu = &d.b * &mu;
        let mbm = mu.dot(&bmu);
        let mut ste = d.stx.clone();
        for mut col in ste.column_iter_mut() {
            col -= &bmu;
        }
        let u = g.tr_mul(&ste);
        let w = hc.solve(&u);
        let lw = p.weights[c].ln();
        for i in 0..n {
            let ee = d.xx[i] - 2.0 * mu.dot(&d.stx.column(i)) + mbm;
            let quad = (ee - u.column(i).dot(&w.column(i))) / p.sigma2;
            log_joint[(i, c)] = lw - 0.5 * (base + quad);
        }
        gamma_hat.push(&g * w);
    }
    let v = &g * hc.solve(&g.transpose()) * p.sigma2;
    Ok((log_joint, Moments { gamma_hat, v }))
}

fn m_step(d: &Design, tau: &DMatrix<f64>, mom: &Moments, random_effects: bool, floor: f64) -> Result<Params> {
    let (n, k) = (d.n(), d.k());
    let mm = tau.ncols();
    let bc = cholesky(&d.b, "spline cross-product")?;
    let mut mu = DMatrix::zeros(mm, k);
    let mut weights = Vec::with_capacity(mm);
    for c in 0..mm {
        let t = tau.column(c);
        let nc: f64 = t.sum();
        if !(nc > 1e-10) {
            return Err(FdError::ClusterDeath { cluster: c, mass: nc });
        }
        weights.push(nc / n as f64);
        let target = (&d.stx * t) / nc;
        let shift = (&mom.gamma_hat[c] * t) / nc;
        mu.set_row(c, &(bc.solve(&target) - shift).transpose());
    }

    let gamma = if random_effects {
        let mut acc = mom.v.clone() * n as f64;
        for c in 0..mm {
            let mut scaled = mom.gamma_hat[c].clone();
            for (i, mut col) in scaled.column_iter_mut().enumerate() {
                col *= tau[(i, c)].sqrt();
            }
            acc += &scaled * scaled.transpose();
        }
        let (g, min) = project_psd(&(acc / n as f64));
        if min < -1e-10 * g.trace().abs().max(f64::MIN_POSITIVE) {
            log::info!("random-effect covariance projected to the PSD cone (eigenvalue {min:e})");
        }
        g
    } else {
        DMatrix::zeros(k, k)
    };

    let tr_bv = (&d.b * &mom.v).trace();
    let mut sse = 0.0;
    for c in 0..mm {
        let mu_c = mu.row(c).transpose();
        for i in 0..n {
            let t = tau[(i, c)];
            if t == 0.0 {
                continue;
            }
            let z: DVector<f64> = &mu_c + mom.gamma_hat[c].column(i);
            let r = d.xx[i] - 2.0 * z.dot(&d.stx.column(i)) + z.dot(&(&d.b * &z));
            sse += t * (r + tr_bv);
        }
    }
    let sigma2 = (sse / (n * d.m_pts) as f64).max(floor);
    Ok(Params {
        mu,
        gamma,
        sigma2,
        weights,
    })
}

/// Starting values from hard responsibilities: least-squares coefficients
/// give the means, their within-cluster scatter (less the noise part) the
/// random-effect covariance, and the residual mean square the noise.
fn initial_params(
    d: &Design,
    tau: &DMatrix<f64>,
    random_effects: bool,
    floor: f64,
) -> Result<Params> {
    let (n, k) = (d.n(), d.k());
    let bc = cholesky(&d.b, "spline cross-product")?;
    let ls = bc.solve(&d.stx);
    let rss: f64 = (0..n)
        .map(|i| d.xx[i] - ls.column(i).dot(&d.stx.column(i)))
        .sum::<f64>()
        .max(0.0);
    let dof = if d.m_pts > k { (n * (d.m_pts - k)) as f64 } else { 1.0 };
    let sigma2 = (rss / dof).max(floor);
    let mm = tau.ncols();
    let mut mu = DMatrix::zeros(mm, k);
    let mut weights = Vec::with_capacity(mm);
    let mut scatter = DMatrix::zeros(k, k);
    for c in 0..mm {
        let t = tau.column(c);
        let nc: f64 = t.sum();
        if !(nc > 1e-10) {
            return Err(FdError::ClusterDeath { cluster: c, mass: nc });
        }
        weights.push(nc / n as f64);
        let mean = (&ls * t) / nc;
        for i in 0..n {
            let e = ls.column(i) - &mean;
            scatter += &e * e.transpose() * t[i];
        }
        mu.set_row(c, &mean.transpose());
    }
    let gamma = if random_effects {
        let b_inv = bc.inverse();
        project_psd(&(scatter / n as f64 - b_inv * sigma2)).0
    } else {
        DMatrix::zeros(k, k)
    };
    Ok(Params {
        mu,
        gamma,
        sigma2,
        weights,
    })
}

/// EM fit of the spline mixed-effects mixture with `M` clusters.
pub fn fclust_em(cs: &CurveSet, basis: &BasisSystem, m: usize, opts: &FclustOptions) -> Result<FclustModel> {
    let k = basis.n_basis();
    let m_pts = cs.n_points();
    if k > m_pts {
        return Err(FdError::invalid(format!(
            "{k} basis functions exceed the {m_pts} grid points"
        )));
    }
    let d = Design::new(basis, cs.grid(), cs.values())?;
    let floor = VAR_FLOOR * total_variance(cs.values()).max(f64::MIN_POSITIVE);
    let ls = cholesky(&d.b, "spline cross-product")?.solve(&d.stx).transpose();
    let runs = par::map_indexed(opts.em.restarts.max(1), |r| {
        let tau = initial_responsibilities(&ls, m, &opts.em, r)?;
        run(cs, basis, &d, tau, opts, floor)
    });
    best_restart(runs, "fclust")
}

fn run(
    cs: &CurveSet,
    basis: &BasisSystem,
    d: &Design,
    tau0: DMatrix<f64>,
    opts: &FclustOptions,
    floor: f64,
) -> Result<FclustModel> {
    let mut params = initial_params(d, &tau0, opts.random_effects, floor)?;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let (post, loglik) = loop {
        let (log_joint, mom) = e_step(d, &params)?;
        let (tau, ll) = posteriors_from_log_joint(&log_joint)?;
        let prev = trace.last().copied();
        trace.push(ll);
        if prev.is_some_and(|p| has_converged(p, ll, opts.em.tol)) {
            converged = true;
            break (tau, ll);
        }
        if trace.len() > opts.em.max_iter {
            break (tau, ll);
        }
        params = m_step(d, &tau, &mom, opts.random_effects, floor)?;
    };
    let (mm, k) = params.mu.shape();
    let n_params = (mm - 1) + mm * k + if opts.random_effects { k * (k + 1) / 2 } else { 0 } + 1;
    Ok(FclustModel {
        grid: cs.grid().to_vec(),
        basis: basis.clone(),
        mu: params.mu,
        gamma: params.gamma,
        sigma: params.sigma2.sqrt(),
        weights: params.weights,
        labels: argmax_rows(&post),
        criteria: InfoCriteria::new(loglik, n_params, &post),
        posteriors: post,
        trace,
        converged,
    })
}

impl FclustModel {
    /// Per-cluster `log π_m + log f_m(x_i)` for curves on the model grid.
    pub fn log_joint(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = Design::new(&self.basis, &self.grid, values)?;
        let p = Params {
            mu: self.mu.clone(),
            gamma: self.gamma.clone(),
            sigma2: self.sigma * self.sigma,
            weights: self.weights.clone(),
        };
        Ok(e_step(&d, &p)?.0)
    }

    /// Cluster mean curves sampled on `grid`, one per row.
    pub fn mean_curves(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        Ok(&self.mu * self.basis.eval(grid, 0)?.transpose())
    }
}

/// Membership probabilities of one curve observed on the model grid.
pub fn fclust_posterior(model: &FclustModel, grid: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let scale = model.grid.iter().fold(1.0f64, |a, t| a.max(t.abs()));
    if grid.len() != model.grid.len()
        || values.len() != grid.len()
        || grid.iter().zip(&model.grid).any(|(a, b)| (a - b).abs() > 1e-9 * scale)
    {
        return Err(FdError::DimensionMismatch("curve is not on the model grid".into()));
    }
    let lj = model.log_joint(&DMatrix::from_row_slice(1, values.len(), values))?;
    let (post, _) = posteriors_from_log_joint(&lj)?;
    Ok(post.row(0).iter().copied().collect())
}
