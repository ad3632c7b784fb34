//! Draw data from each adaptive model, for recovery checks and demos.
//! Clusters are laid out contiguously: `per_cluster` curves from cluster 0,
//! then cluster 1, and so on.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::funhddc::HddcGroup;
use super::wavelet::{haar_idwt, HaarCoefficients};
use crate::basis::{BasisSystem, CoefficientSet};
use crate::curves::CurveSet;
use crate::error::{FdError, Result};
use crate::linalg::{cholesky, psd_factor};

fn normals(rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
    DVector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(rng)))
}

fn ids(m: usize, per_cluster: usize) -> Vec<String> {
    (0..m * per_cluster)
        .map(|i| format!("s{}_{:04}", i / per_cluster, i % per_cluster))
        .collect()
}

fn labels(m: usize, per_cluster: usize) -> Vec<usize> {
    (0..m * per_cluster).map(|i| i / per_cluster).collect()
}

/// `x = S(μ_m + γ) + ε`, `γ ~ N(0, Γ)`, `ε ~ N(0, σ² I)`.
pub fn fclust_data(
    basis: &BasisSystem,
    grid: &[f64],
    mu: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    sigma: f64,
    per_cluster: usize,
    seed: u64,
) -> Result<(CurveSet, Vec<usize>)> {
    let k = basis.n_basis();
    if mu.ncols() != k || gamma.shape() != (k, k) {
        return Err(FdError::DimensionMismatch("parameters do not match the basis".into()));
    }
    let s = basis.eval(grid, 0)?;
    let g = psd_factor(gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = mu.nrows();
    let mut values = DMatrix::zeros(m * per_cluster, grid.len());
    for i in 0..m * per_cluster {
        let coef = mu.row(i / per_cluster).transpose() + &g * normals(&mut rng, k);
        let x = &s * coef + normals(&mut rng, grid.len()) * sigma;
        values.set_row(i, &x.transpose());
    }
    Ok((CurveSet::new(grid.to_vec(), values, ids(m, per_cluster))?, labels(m, per_cluster)))
}

/// Time-domain curves whose Haar coefficients are `θ_m + u + e`, with
/// `u ~ N(0, γ_m² I)` on all but the finest detail level and
/// `e ~ N(0, σ² I)` everywhere. `means` is `M × N` in coefficient order.
pub fn waveclust_data(
    means: &DMatrix<f64>,
    gamma2: &[f64],
    sigma2: f64,
    per_cluster: usize,
    seed: u64,
) -> Result<(CurveSet, Vec<usize>)> {
    let (m, nn) = means.shape();
    if gamma2.len() != m {
        return Err(FdError::DimensionMismatch("one random-effect variance per cluster".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = DMatrix::zeros(m * per_cluster, nn);
    for i in 0..m * per_cluster {
        let c = i / per_cluster;
        let mut y: Vec<f64> = means.row(c).iter().copied().collect();
        for (j, v) in y.iter_mut().enumerate() {
            let sd = if j < nn / 2 { (gamma2[c] + sigma2).sqrt() } else { sigma2.sqrt() };
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sd * z;
        }
        let x = haar_idwt(&HaarCoefficients::from_vec(&y)?)?;
        for (t, v) in x.into_iter().enumerate() {
            values[(i, t)] = v;
        }
    }
    let grid = (0..nn).map(|t| t as f64).collect();
    Ok((CurveSet::new(grid, values, ids(m, per_cluster))?, labels(m, per_cluster)))
}

/// Coefficients whose Gram-metric coordinates `y = Lᵀ c` are Gaussian with
/// each group's `Q Δ Qᵀ` covariance.
pub fn funhddc_data(
    basis: &BasisSystem,
    groups: &[HddcGroup],
    per_cluster: usize,
    seed: u64,
) -> Result<(CoefficientSet, Vec<usize>)> {
    let k = basis.n_basis();
    let lt = cholesky(basis.gram(), "basis Gram matrix")?.l().transpose();
    let factors: Vec<DMatrix<f64>> = groups.iter().map(|g| psd_factor(&g.covariance())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = groups.len();
    let mut coeffs = DMatrix::zeros(m * per_cluster, k);
    for i in 0..m * per_cluster {
        let c = i / per_cluster;
        if groups[c].mean.len() != k {
            return Err(FdError::DimensionMismatch("group mean does not match the basis".into()));
        }
        let y = &groups[c].mean + &factors[c] * normals(&mut rng, k);
        let coef = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| FdError::Singular("Gram factor".into()))?;
        coeffs.set_row(i, &coef.transpose());
    }
    Ok((
        CoefficientSet::new(ids(m, per_cluster), coeffs, basis.clone())?,
        labels(m, per_cluster),
    ))
}
