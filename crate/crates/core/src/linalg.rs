//! Small dense linear-algebra helpers shared by the fitters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FdError, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Symmetric eigendecomposition with eigenvalues sorted non-increasing.
/// Eigenvectors are the columns of the returned matrix.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// A factor `F` with `F Fᵀ = m` for symmetric positive semi-definite `m`.
/// Negative eigenvalues (rounding noise) are clamped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(m);
    let mut f = vecs;
    for (j, v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

/// Projection onto the PSD cone; also reports the most negative eigenvalue clipped.
pub fn project_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let (vals, vecs) = sym_eigen_desc(m);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return (symmetrize(m), 0.0);
    }
    let clamped = DMatrix::from_diagonal(&vals.map(|v| v.max(0.0)));
    (symmetrize(&(&vecs * clamped * vecs.transpose())), min)
}

/// Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    nalgebra::Cholesky::new(symmetrize(m))
        .ok_or_else(|| FdError::Singular(format!("{what} is not positive definite")))
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Turn per-component log joint densities (`log π_m + log f_m(x_i)`) into
/// posterior rows. Returns the posteriors and the total log-likelihood.
pub fn posteriors_from_log_joint(log_joint: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let (n, k) = log_joint.shape();
    let mut post = DMatrix::zeros(n, k);
    let mut total = 0.0;
    let mut row = vec![0.0; k];
    for i in 0..n {
        for m in 0..k {
            row[m] = log_joint[(i, m)];
        }
        let lse = log_sum_exp(&row);
        if !lse.is_finite() {
            return Err(FdError::NonFinite(format!(
                "log-likelihood of observation {i} is {lse}"
            )));
        }
        total += lse;
        for m in 0..k {
            post[(i, m)] = (row[m] - lse).exp();
        }
        // renormalise away rounding so rows sum to one
        let s: f64 = post.row(i).sum();
        for m in 0..k {
            post[(i, m)] /= s;
        }
    }
    Ok((post, total))
}

/// Posterior classification entropy `-Σ τ log τ`.
pub fn posterior_entropy(post: &DMatrix<f64>) -> f64 {
    post.iter()
        .filter(|&&t| t > 0.0)
        .map(|&t| -t * t.ln())
        .sum()
}

/// Hard labels by row-wise argmax (ties to the lower index).
pub fn argmax_rows(post: &DMatrix<f64>) -> Vec<usize> {
    (0..post.nrows())
        .map(|i| {
            let mut best = 0;
            for m in 1..post.ncols() {
                if post[(i, m)] > post[(i, best)] {
                    best = m;
                }
            }
            best
        })
        .collect()
}

/// Column means of a row-observation matrix.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Total variance of all entries of `x` about their grand mean.
pub fn total_variance(x: &DMatrix<f64>) -> f64 {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}
