//! B-spline basis systems, roughness penalties and penalized least-squares
//! smoothing with generalized cross-validation.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curves::{fmt_num, CurveSet};
use crate::error::{FdError, Result};
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::par;

/// Ratio of the smallest to the largest diagonal entry of the triangular
/// factor below which a smoothing system is declared singular
/// (condition number of the normal equations above ~1e14).
pub const SINGULAR_RATIO: f64 = 1e-7;
/// Penalty eigenvalues at or below this fraction of the largest one belong
/// to the null space (linear functions) and are treated as exactly zero.
const PENALTY_NULL_TOL: f64 = 1e-10;

/// A B-spline system of `n_basis` functions of the given order on `[a, b]`
/// with equally spaced interior knots, together with its derivative Gram
/// matrices `W_l = ∫ D^l φ D^l φᵀ` for `l = 0, 1, 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSystem {
    domain: (f64, f64),
    order: usize,
    n_basis: usize,
    knots: Vec<f64>,
    grams: Vec<DMatrix<f64>>,
}

/// Serializable description of a basis; the matrices are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub order: usize,
    pub n_basis: usize,
    pub domain: (f64, f64),
    pub knots: Vec<f64>,
}

/// Build a B-spline basis with `n_basis` functions of `order` (4 = cubic).
pub fn make_bspline_basis(domain: (f64, f64), n_basis: usize, order: usize) -> Result<BasisSystem> {
    let (a, b) = domain;
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(FdError::invalid(format!("degenerate domain [{a}, {b}]")));
    }
    if order < 2 {
        return Err(FdError::invalid(format!("spline order {order} < 2")));
    }
    if n_basis < order {
        return Err(FdError::invalid(format!(
            "{n_basis} basis functions is fewer than the order {order}"
        )));
    }
    let n_interior = n_basis - order;
    let mut knots = vec![a; order];
    for j in 1..=n_interior {
        knots.push(a + (b - a) * j as f64 / (n_interior + 1) as f64);
    }
    knots.extend(std::iter::repeat_n(b, order));
    let mut basis = BasisSystem {
        domain,
        order,
        n_basis,
        knots,
        grams: Vec::new(),
    };
    let max_deriv = (order - 1).min(2);
    basis.grams = (0..=max_deriv).map(|l| basis.assemble_gram(l)).collect();
    Ok(basis)
}

impl BasisSystem {
    pub fn from_spec(spec: &BasisSpec) -> Result<Self> {
        let basis = make_bspline_basis(spec.domain, spec.n_basis, spec.order)?;
        if basis.knots.len() != spec.knots.len()
            || basis
                .knots
                .iter()
                .zip(&spec.knots)
                .any(|(x, y)| (x - y).abs() > 1e-9 * (1.0 + x.abs()))
        {
            return Err(FdError::invalid(
                "only equally spaced interior knots are supported",
            ));
        }
        Ok(basis)
    }

    pub fn spec(&self) -> BasisSpec {
        BasisSpec {
            order: self.order,
            n_basis: self.n_basis,
            domain: self.domain,
            knots: self.knots.clone(),
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.spec())?;
        std::fs::write(path, text).map_err(|e| FdError::io(path, e))
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// `W = ∫ φ φᵀ`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.grams[0]
    }

    /// `R = ∫ D²φ D²φᵀ` (zero for linear splines).
    pub fn penalty(&self) -> DMatrix<f64> {
        self.grams
            .get(2)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(self.n_basis, self.n_basis))
    }

    /// Derivative Gram matrix `W_l = ∫ D^l φ D^l φᵀ` for `l ≤ order − 2`.
    pub fn derivative_gram(&self, l: usize) -> Result<&DMatrix<f64>> {
        if l + 2 > self.order {
            return Err(FdError::invalid(format!(
                "derivative order {l} exceeds order − 2 = {}",
                self.order as isize - 2
            )));
        }
        self.grams
            .get(l)
            .ok_or_else(|| FdError::invalid(format!("derivative order {l} not assembled")))
    }

    fn degree(&self) -> usize {
        self.order - 1
    }

    /// Index `s` of the knot span `[knots[s], knots[s+1])` containing `t`.
    fn span(&self, t: f64) -> usize {
        let p = self.degree();
        let n = self.n_basis - 1;
        if t >= self.knots[n + 1] {
            return n;
        }
        if t <= self.knots[p] {
            return p;
        }
        let (mut lo, mut hi) = (p, n + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Values and derivatives up to `nd` of the `order` non-zero basis
    /// functions on `span` at `t`: `out[k][j] = D^k φ_{span-p+j}(t)`.
    fn local_derivatives(&self, span: usize, t: f64, nd: usize) -> Vec<Vec<f64>> {
        let p = self.degree();
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; nd + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nd.min(p) {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=nd.min(p) {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }

    /// Evaluate `D^deriv φ_k(t_j)` as an `m × K` matrix.
    pub fn eval(&self, grid: &[f64], deriv: usize) -> Result<DMatrix<f64>> {
        if deriv + 2 > self.order {
            return Err(FdError::invalid(format!(
                "derivative order {deriv} exceeds order − 2"
            )));
        }
        let (a, b) = self.domain;
        let slack = 1e-12 * (b - a);
        let p = self.degree();
        let mut out = DMatrix::zeros(grid.len(), self.n_basis);
        for (j, &t) in grid.iter().enumerate() {
            if !(t >= a - slack && t <= b + slack) {
                return Err(FdError::invalid(format!(
                    "point {t} outside the basis domain [{a}, {b}]"
                )));
            }
            let t = t.clamp(a, b);
            let s = self.span(t);
            let ders = self.local_derivatives(s, t, deriv);
            for (r, v) in ders[deriv].iter().enumerate() {
                out[(j, s - p + r)] = *v;
            }
        }
        Ok(out)
    }

    fn assemble_gram(&self, l: usize) -> DMatrix<f64> {
        let p = self.degree();
        let (nodes, weights) = gauss_legendre(self.order + 1);
        let mut w = DMatrix::zeros(self.n_basis, self.n_basis);
        for s in p..self.n_basis {
            let (lo, hi) = (self.knots[s], self.knots[s + 1]);
            if hi <= lo {
                continue;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (x, wt) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let ders = self.local_derivatives(s, t, l);
                let row = &ders[l];
                for r in 0..=p {
                    for c in 0..=p {
                        w[(s - p + r, s - p + c)] += half * wt * row[r] * row[c];
                    }
                }
            }
        }
        symmetrize(&w)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Result of one penalized least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedFit {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
    /// Effective degrees of freedom, the trace of the hat matrix.
    pub df: f64,
    pub sse: f64,
    pub gcv: f64,
}

/// `(sse/m) / (1 − df/m)²`, or `+∞` for a saturated fit (`df → m`).
pub fn gcv_score(sse: f64, df: f64, m: usize) -> f64 {
    let m = m as f64;
    let denom = 1.0 - df / m;
    if denom <= 1e-10 {
        f64::INFINITY
    } else {
        (sse / m) / (denom * denom)
    }
}

/// Orthogonal factorization of the augmented least-squares problem
/// `[S; √λ·Fᵀ] c ≈ [X; 0]` (with `R = F Fᵀ`) for one λ. Its solution is the
/// solution of the normal equations `(SᵀS + λR) c = SᵀX`.
#[derive(Debug, Clone)]
pub struct NormalSystem {
    lambda: f64,
    /// Rows of the thin `Q` that multiply the data block (`m × K`).
    q_data: DMatrix<f64>,
    r: DMatrix<f64>,
    df: f64,
}

impl NormalSystem {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Trace of the hat matrix `S (SᵀS + λR)⁻¹ Sᵀ = Q₁Q₁ᵀ`.
    pub fn df(&self) -> f64 {
        self.df
    }

    /// Coefficients for every column of `rhs` (`m × r` data columns).
    pub fn solve(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let z = self.q_data.tr_mul(data);
        self.r
            .solve_upper_triangular(&z)
            .expect("triangular factor checked at construction")
    }
}

/// Basis evaluated on a fixed grid, reused across curves and λ values.
#[derive(Debug, Clone)]
pub struct Smoother {
    basis: BasisSystem,
    grid: Vec<f64>,
    design: DMatrix<f64>,
    /// `Fᵀ` with `R = F Fᵀ`; rows for the null space of `R` are dropped.
    penalty_root: DMatrix<f64>,
}

impl Smoother {
    pub fn new(basis: &BasisSystem, grid: &[f64]) -> Result<Self> {
        let design = basis.eval(grid, 0)?;
        let (vals, vecs) = sym_eigen_desc(&basis.penalty());
        let top = vals.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..vals.len())
            .filter(|&j| vals[j] > PENALTY_NULL_TOL * top)
            .collect();
        let mut penalty_root = DMatrix::zeros(keep.len(), basis.n_basis());
        for (row, &j) in keep.iter().enumerate() {
            let s = vals[j].sqrt();
            for k in 0..basis.n_basis() {
                penalty_root[(row, k)] = s * vecs[(k, j)];
            }
        }
        Ok(Smoother {
            basis: basis.clone(),
            grid: grid.to_vec(),
            design,
            penalty_root,
        })
    }

    pub fn basis(&self) -> &BasisSystem {
        &self.basis
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `m × K` design matrix `S`.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn system(&self, lambda: f64) -> Result<NormalSystem> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(FdError::invalid(format!("smoothing parameter {lambda} must be ≥ 0")));
        }
        let (m, k) = self.design.shape();
        let p = if lambda > 0.0 { self.penalty_root.nrows() } else { 0 };
        if m + p < k {
            return Err(FdError::Singular(format!(
                "{m} points cannot determine {k} coefficients at λ = {lambda}"
            )));
        }
        let mut aug = DMatrix::zeros(m + p, k);
        aug.rows_mut(0, m).copy_from(&self.design);
        if p > 0 {
            aug.rows_mut(m, p).copy_from(&(&self.penalty_root * lambda.sqrt()));
        }
        let qr = aug.qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > SINGULAR_RATIO * max) {
            return Err(FdError::Singular(format!(
                "normal equations at λ = {lambda} are numerically singular (R-diagonal ratio {:.2e})",
                min / max
            )));
        }
        let q_data = qr.q().rows(0, m).into_owned();
        let df = q_data.norm_squared();
        Ok(NormalSystem {
            lambda,
            q_data,
            r,
            df,
        })
    }

    pub fn fit_with(&self, sys: &NormalSystem, values: &[f64]) -> Result<PenalizedFit> {
        if values.len() != self.grid.len() {
            return Err(FdError::DimensionMismatch(format!(
                "curve has {} values for a {}-point grid",
                values.len(),
                self.grid.len()
            )));
        }
        let y = DVector::from_column_slice(values);
        let c = sys.solve(&DMatrix::from_column_slice(values.len(), 1, values));
        let coefficients = DVector::from_column_slice(c.as_slice());
        let sse = (&y - &self.design * &coefficients).norm_squared();
        Ok(PenalizedFit {
            gcv: gcv_score(sse, sys.df, values.len()),
            coefficients,
            lambda: sys.lambda,
            df: sys.df,
            sse,
        })
    }

    pub fn fit(&self, values: &[f64], lambda: f64) -> Result<PenalizedFit> {
        let sys = self.system(lambda)?;
        self.fit_with(&sys, values)
    }
}

/// Penalized least-squares fit `ĉ = (SᵀS + λR)⁻¹ SᵀX` of one curve.
pub fn fit_penalized(
    values: &[f64],
    grid: &[f64],
    basis: &BasisSystem,
    lambda: f64,
) -> Result<PenalizedFit> {
    Smoother::new(basis, grid)?.fit(values, lambda)
}

/// 41 log-spaced values in `[1e-6, 1e4]`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..41).map(|i| 10f64.powf(-6.0 + 0.25 * i as f64)).collect()
}

/// Choose the GCV-minimizing fit among precomputed systems; fits whose
/// scores are indistinguishable from the minimum tie toward larger λ.
fn best_gcv(smoother: &Smoother, systems: &[NormalSystem], values: &[f64]) -> Result<PenalizedFit> {
    let fits: Vec<PenalizedFit> = systems
        .iter()
        .filter_map(|s| smoother.fit_with(s, values).ok())
        .collect();
    if fits.is_empty() {
        return Err(FdError::Singular("every λ produced a singular fit".into()));
    }
    let gmin = fits.iter().map(|f| f.gcv).fold(f64::INFINITY, f64::min);
    let scale = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    let tol = 1e-10 * gmin.abs() + 1e-24 * scale;
    fits.into_iter()
        .filter(|f| f.gcv <= gmin + tol)
        .max_by(|a, b| a.lambda.total_cmp(&b.lambda))
        .ok_or_else(|| FdError::Singular("no finite GCV score".into()))
}

/// Fit one curve at every λ in `lambda_grid` and keep the GCV minimizer.
pub fn select_lambda_gcv(
    values: &[f64],
    grid: &[f64],
    basis: &BasisSystem,
    lambda_grid: &[f64],
) -> Result<(f64, PenalizedFit)> {
    if lambda_grid.is_empty() {
        return Err(FdError::invalid("empty λ grid"));
    }
    if let Some(l) = lambda_grid.iter().find(|l| !(**l >= 0.0)) {
        return Err(FdError::invalid(format!("negative λ {l} in grid")));
    }
    let smoother = Smoother::new(basis, grid)?;
    let systems: Vec<NormalSystem> = lambda_grid
        .iter()
        .filter_map(|&l| smoother.system(l).ok())
        .collect();
    let fit = best_gcv(&smoother, &systems, values)?;
    Ok((fit.lambda, fit))
}

/// How the smoothing parameter is chosen for each curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    Gcv(Vec<f64>),
}

impl LambdaChoice {
    pub fn gcv_default() -> Self {
        LambdaChoice::Gcv(default_lambda_grid())
    }
}

/// Basis coefficients of a whole curve set.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub ids: Vec<String>,
    /// `n × K`, one curve per row.
    pub coefficients: DMatrix<f64>,
    pub basis: BasisSystem,
    pub lambdas: Vec<f64>,
}

impl CoefficientSet {
    pub fn new(ids: Vec<String>, coefficients: DMatrix<f64>, basis: BasisSystem) -> Result<Self> {
        if coefficients.ncols() != basis.n_basis() {
            return Err(FdError::DimensionMismatch(format!(
                "{} coefficient columns for a {}-function basis",
                coefficients.ncols(),
                basis.n_basis()
            )));
        }
        if ids.len() != coefficients.nrows() {
            return Err(FdError::DimensionMismatch("ids vs coefficient rows".into()));
        }
        let lambdas = vec![0.0; ids.len()];
        Ok(CoefficientSet {
            ids,
            coefficients,
            basis,
            lambdas,
        })
    }

    pub fn n_curves(&self) -> usize {
        self.coefficients.nrows()
    }

    /// Evaluate every curve on `grid` (`n × m`).
    pub fn evaluate(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.basis.eval(grid, 0)?;
        Ok(&self.coefficients * s.transpose())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_matrix_csv(path.as_ref(), &self.ids, &self.coefficients, "c")
    }
}

pub(crate) fn write_matrix_csv(
    path: &Path,
    ids: &[String],
    m: &DMatrix<f64>,
    prefix: &str,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["curve_id".to_string()];
    header.extend((1..=m.ncols()).map(|j| format!("{prefix}{j}")));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.row(i).iter().map(|v| fmt_num(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| FdError::io(path, e))
}

/// Smooth every curve of `cs` in `basis`; rows keep the input order.
pub fn smooth_curveset(cs: &CurveSet, basis: &BasisSystem, lambda: &LambdaChoice) -> Result<CoefficientSet> {
    let smoother = Smoother::new(basis, cs.grid())?;
    let systems: Vec<NormalSystem> = match lambda {
        LambdaChoice::Fixed(l) => vec![smoother.system(*l).map_err(|e| FdError::Curve {
            id: cs.ids()[0].clone(),
            source: Box::new(e),
        })?],
        LambdaChoice::Gcv(grid) => {
            if grid.is_empty() {
                return Err(FdError::invalid("empty λ grid"));
            }
            if let Some(l) = grid.iter().find(|l| !(**l >= 0.0)) {
                return Err(FdError::invalid(format!("negative λ {l} in grid")));
            }
            par::map_indexed(grid.len(), |i| smoother.system(grid[i]))
                .into_iter()
                .filter_map(|r| r.ok())
                .collect()
        }
    };
    let fits = par::map_indexed(cs.n_curves(), |i| {
        let values = cs.curve(i);
        let fit = if systems.len() == 1 {
            smoother.fit_with(&systems[0], &values)
        } else {
            best_gcv(&smoother, &systems, &values)
        };
        fit.map_err(|e| FdError::Curve {
            id: cs.ids()[i].clone(),
            source: Box::new(e),
        })
    });
    let k = basis.n_basis();
    let mut coefficients = DMatrix::zeros(cs.n_curves(), k);
    let mut lambdas = Vec::with_capacity(cs.n_curves());
    for (i, fit) in fits.into_iter().enumerate() {
        let fit = fit?;
        coefficients.set_row(i, &fit.coefficients.transpose());
        lambdas.push(fit.lambda);
    }
    Ok(CoefficientSet {
        ids: cs.ids().to_vec(),
        coefficients,
        basis: basis.clone(),
        lambdas,
    })
}

/// Mean GCV score over curves for each candidate basis size, for
/// inspecting where adding basis functions stops paying off.
pub fn gcv_by_basis_size(
    cs: &CurveSet,
    sizes: &[usize],
    order: usize,
    lambda: f64,
) -> Result<Vec<(usize, f64)>> {
    sizes
        .iter()
        .map(|&k| {
            let basis = make_bspline_basis(cs.domain(), k, order)?;
            let smoother = Smoother::new(&basis, cs.grid())?;
            let sys = smoother.system(lambda)?;
            let mut total = 0.0;
            for i in 0..cs.n_curves() {
                total += smoother.fit_with(&sys, &cs.curve(i))?.gcv;
            }
            Ok((k, total / cs.n_curves() as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(a: f64, b: f64, m: usize) -> Vec<f64> {
        (0..m).map(|j| a + (b - a) * j as f64 / (m - 1) as f64).collect()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        // exact up to degree 9
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((int - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn paper_elbow_basis() {
        let basis = make_bspline_basis((0.0, 237.0), 12, 4).unwrap();
        assert_eq!(basis.knots().len(), 16);
        let interior = basis.knots().iter().filter(|&&t| t > 0.0 && t < 237.0).count();
        assert_eq!(interior, 8);
        let s = basis.eval(&grid(0.0, 237.0, 238), 0).unwrap();
        for row in s.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn bernstein_case() {
        let basis = make_bspline_basis((0.0, 1.0), 4, 4).unwrap();
        let s = basis.eval(&[0.5], 0).unwrap();
        assert!((s.sum() - 1.0).abs() < 1e-15);
        // cubic Bernstein polynomials at 1/2: 1/8, 3/8, 3/8, 1/8
        for (v, e) in s.iter().zip([0.125, 0.375, 0.375, 0.125]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn penalty_annihilates_lines() {
        let basis = make_bspline_basis((0.0, 10.0), 9, 4).unwrap();
        // Greville abscissae reproduce f(t) = t exactly
        let k = basis.knots();
        let c = DVector::from_iterator(9, (0..9).map(|i| (k[i + 1] + k[i + 2] + k[i + 3]) / 3.0));
        let s = basis.eval(&grid(0.0, 10.0, 21), 0).unwrap();
        let g = grid(0.0, 10.0, 21);
        for (j, v) in (&s * &c).iter().enumerate() {
            assert!((v - g[j]).abs() < 1e-12);
        }
        assert!((basis.penalty() * &c).norm() <= 1e-8);
    }

    #[test]
    fn eval_errors() {
        let basis = make_bspline_basis((0.0, 1.0), 6, 4).unwrap();
        assert!(basis.eval(&[1.5], 0).is_err());
        assert!(basis.eval(&[0.5], 3).is_err());
        assert!(make_bspline_basis((0.0, 1.0), 3, 4).is_err());
        assert!(make_bspline_basis((1.0, 1.0), 6, 4).is_err());
    }

    #[test]
    fn first_derivative_rows_sum_to_zero() {
        let basis = make_bspline_basis((0.0, 5.0), 10, 4).unwrap();
        let d1 = basis.eval(&grid(0.0, 5.0, 57), 1).unwrap();
        for row in d1.row_iter() {
            assert!(row.sum().abs() < 1e-10);
        }
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        let basis = make_bspline_basis((0.0, 1.0), 8, 4).unwrap();
        let h = 1e-4;
        let pts: Vec<f64> = (1..40).map(|j| j as f64 / 40.0 + 0.003).collect();
        let d2 = basis.eval(&pts, 2).unwrap();
        let plus: Vec<f64> = pts.iter().map(|t| t + h).collect();
        let minus: Vec<f64> = pts.iter().map(|t| t - h).collect();
        let fd = (basis.eval(&plus, 0).unwrap() - basis.eval(&pts, 0).unwrap() * 2.0
            + basis.eval(&minus, 0).unwrap())
            / (h * h);
        assert!((d2 - fd).abs().max() <= 1e-4);
    }

    #[test]
    fn line_is_reproduced_for_any_lambda() {
        let basis = make_bspline_basis((0.0, 3.0), 10, 4).unwrap();
        let g = grid(0.0, 3.0, 31);
        let y: Vec<f64> = g.iter().map(|t| 2.0 * t + 1.0).collect();
        for lambda in [0.0, 1e-3, 1.0, 1e4] {
            let fit = fit_penalized(&y, &g, &basis, lambda).unwrap();
            let yhat = basis.eval(&g, 0).unwrap() * &fit.coefficients;
            for (a, b) in yhat.iter().zip(&y) {
                assert!((a - b).abs() <= 1e-8, "λ={lambda}");
            }
        }
    }

    #[test]
    fn square_system_interpolates() {
        let basis = make_bspline_basis((0.0, 1.0), 8, 4).unwrap();
        let g = grid(0.0, 1.0, 8);
        let y: Vec<f64> = g.iter().map(|t| (5.0 * t).sin() + t * t).collect();
        let fit = fit_penalized(&y, &g, &basis, 0.0).unwrap();
        let norm2: f64 = y.iter().map(|v| v * v).sum();
        assert!(fit.sse <= 1e-16 * norm2, "sse = {}", fit.sse);
        assert!((fit.df - 8.0).abs() < 1e-8);
        assert_eq!(fit.gcv, f64::INFINITY);
    }

    #[test]
    fn heavy_penalty_flattens_curvature() {
        let basis = make_bspline_basis((0.0, 1.0), 12, 4).unwrap();
        let g = grid(0.0, 1.0, 40);
        let y: Vec<f64> = g.iter().map(|t| (7.0 * t).sin()).collect();
        let r = basis.penalty();
        let rough = |c: &DVector<f64>| (c.transpose() * &r * c)[(0, 0)];
        let f0 = fit_penalized(&y, &g, &basis, 0.0).unwrap();
        let f6 = fit_penalized(&y, &g, &basis, 1e6).unwrap();
        assert!(rough(&f6.coefficients) <= 1e-6 * rough(&f0.coefficients));
    }

    #[test]
    fn singular_system_is_reported() {
        let basis = make_bspline_basis((0.0, 1.0), 12, 4).unwrap();
        let g = grid(0.0, 1.0, 6);
        let err = fit_penalized(&[0.0; 6], &g, &basis, 0.0).unwrap_err();
        assert!(matches!(err, FdError::Singular(_)));
    }

    #[test]
    fn gcv_ties_go_to_largest_lambda() {
        let basis = make_bspline_basis((0.0, 2.0), 10, 4).unwrap();
        let g = grid(0.0, 2.0, 30);
        let y: Vec<f64> = g.iter().map(|t| 3.0 - 0.5 * t).collect();
        let lambdas = default_lambda_grid();
        let (best, fit) = select_lambda_gcv(&y, &g, &basis, &lambdas).unwrap();
        assert_eq!(best, 1e4);
        assert_eq!(fit.lambda, 1e4);
        assert!(select_lambda_gcv(&y, &g, &basis, &[]).is_err());
        assert!(select_lambda_gcv(&y, &g, &basis, &[-1.0]).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let basis = make_bspline_basis((0.0, 237.0), 12, 4).unwrap();
        let json = serde_json::to_string(&basis.spec()).unwrap();
        let back: BasisSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(BasisSystem::from_spec(&back).unwrap(), basis);
    }
}
