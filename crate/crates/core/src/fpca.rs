//! Functional principal component analysis of curves held in a basis.
//!
//! With `W = L Lᵀ` the Gram matrix of the basis and `Σ` the sample
//! covariance of the coefficients, the eigenproblem of the covariance
//! operator reduces to the symmetric problem `Lᵀ Σ L v = μ v`; the
//! eigenfunction coefficients are `ψ = L⁻ᵀ v`, orthonormal in `L²`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::basis::{write_matrix_csv, BasisSystem, CoefficientSet};
use crate::error::{FdError, Result};
use crate::linalg::{column_means, sym_eigen_desc};

/// Eigenvalues at or below this fraction of the data scale count as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FpcaModel {
    pub ids: Vec<String>,
    pub basis: BasisSystem,
    pub mean_coeffs: DVector<f64>,
    /// One eigenfunction per row, in basis coordinates (`L × K`).
    pub eigen_coeffs: DMatrix<f64>,
    /// Non-increasing, non-negative.
    pub eigenvalues: DVector<f64>,
    /// `n × L` scores of the centered curves.
    pub scores: DMatrix<f64>,
    /// Cumulative proportion of variance explained.
    pub var_explained: Vec<f64>,
    /// Number of strictly positive eigenvalues.
    pub rank: usize,
}

/// All `min(n − 1, K)` principal components of a coefficient set.
pub fn fpca(coeffs: &CoefficientSet) -> Result<FpcaModel> {
    let n = coeffs.n_curves();
    if n < 2 {
        return Err(FdError::invalid("FPCA needs at least two curves"));
    }
    let c = &coeffs.coefficients;
    let k = c.ncols();
    let mean = column_means(c);
    let mut centered = c.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    let w = coeffs.basis.gram();
    let chol = nalgebra::Cholesky::new(w.clone())
        .ok_or_else(|| FdError::Singular("basis Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let reduced = l.transpose() * &cov * &l;
    let (vals, vecs) = sym_eigen_desc(&reduced);

    let n_comp = (n - 1).min(k);
    let mean_norm = (mean.transpose() * w * &mean)[(0, 0)];
    let tol = RANK_TOL * reduced.trace().max(mean_norm).max(f64::MIN_POSITIVE);
    let lt = l.transpose();
    let mut eigen_coeffs = DMatrix::zeros(n_comp, k);
    let mut eigenvalues = DVector::zeros(n_comp);
    let mut rank = 0;
    for j in 0..n_comp {
        let v = vecs.column(j).into_owned();
        let mut psi = lt
            .solve_upper_triangular(&v)
            .ok_or_else(|| FdError::Singular("triangular Gram factor".into()))?;
        let (imax, _) = psi
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
        if psi[imax] < 0.0 {
            psi.neg_mut();
        }
        eigen_coeffs.set_row(j, &psi.transpose());
        if vals[j] > tol {
            eigenvalues[j] = vals[j];
            rank += 1;
        }
    }
    let scores = &centered * w * eigen_coeffs.transpose();
    let total: f64 = eigenvalues.sum();
    let var_explained = if total > 0.0 {
        let mut acc = 0.0;
        eigenvalues
            .iter()
            .map(|v| {
                acc += v;
                acc / total
            })
            .collect()
    } else {
        vec![0.0; n_comp]
    };
    Ok(FpcaModel {
        ids: coeffs.ids.clone(),
        basis: coeffs.basis.clone(),
        mean_coeffs: mean,
        eigen_coeffs,
        eigenvalues,
        scores,
        var_explained,
        rank,
    })
}

/// Smallest number of components whose cumulative share reaches `threshold`.
pub fn select_components(model: &FpcaModel, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(FdError::invalid(format!(
            "variance threshold {threshold} outside (0, 1]"
        )));
    }
    if model.rank == 0 {
        return Err(FdError::invalid("zero total variance"));
    }
    let l = model
        .var_explained
        .iter()
        .position(|&p| p >= threshold - 1e-12)
        .map(|i| i + 1)
        .unwrap_or(model.rank);
    Ok(l.min(model.rank))
}

impl FpcaModel {
    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.sum()
    }

    /// First `l` score columns.
    pub fn leading_scores(&self, l: usize) -> DMatrix<f64> {
        self.scores.columns(0, l.min(self.scores.ncols())).into_owned()
    }

    /// Eigenfunctions sampled on `grid`, one per row.
    pub fn eigenfunctions_on(&self, grid: &[f64], l: usize) -> Result<DMatrix<f64>> {
        let s = self.basis.eval(grid, 0)?;
        Ok(self.eigen_coeffs.rows(0, l) * s.transpose())
    }

    pub fn write_scores_csv(&self, path: impl AsRef<Path>, l: usize) -> Result<()> {
        write_matrix_csv(path.as_ref(), &self.ids, &self.leading_scores(l), "xi")
    }
}

/// Curves rebuilt from the mean and the first `l` components.
pub fn reconstruct(model: &FpcaModel, l: usize) -> Result<CoefficientSet> {
    if l < 1 || l > model.rank {
        return Err(FdError::invalid(format!(
            "number of components {l} outside 1..={}",
            model.rank
        )));
    }
    let mut coeffs = model.scores.columns(0, l) * model.eigen_coeffs.rows(0, l);
    for mut row in coeffs.row_iter_mut() {
        row += model.mean_coeffs.transpose();
    }
    CoefficientSet::new(model.ids.clone(), coeffs, model.basis.clone())
}
