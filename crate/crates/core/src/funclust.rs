//! Distance-based functional clustering under the derivative metric
//! `d_l(f, g)² = ∫ (D^l f − D^l g)²`, evaluated exactly in coefficient space
//! as `(c_f − c_g)ᵀ W_l (c_f − c_g)`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::basis::{BasisSystem, CoefficientSet};
use crate::error::{FdError, Result};
use crate::linalg::{cholesky, psd_factor};
use crate::mvclust::{kmeans, silhouette, Partition};
use crate::par;

/// `F` with `F Fᵀ = W_l`: the Cholesky factor for `l = 0`, an eigen factor
/// (null space dropped) for the singular derivative Grams.
pub fn metric_factor(basis: &BasisSystem, l: usize) -> Result<DMatrix<f64>> {
    let w = basis.derivative_gram(l)?;
    if l == 0 {
        Ok(cholesky(w, "basis Gram matrix")?.l())
    } else {
        Ok(psd_factor(w))
    }
}

/// Curve coordinates in which `d_l` is the Euclidean distance.
pub fn metric_coordinates(coeffs: &CoefficientSet, l: usize) -> Result<DMatrix<f64>> {
    Ok(&coeffs.coefficients * metric_factor(&coeffs.basis, l)?)
}

pub fn functional_distance(ci: &DVector<f64>, cj: &DVector<f64>, basis: &BasisSystem, l: usize) -> Result<f64> {
    let k = basis.n_basis();
    if ci.len() != k || cj.len() != k {
        return Err(FdError::DimensionMismatch(format!(
            "coefficient vectors of length {} and {} for a basis of {k} functions",
            ci.len(),
            cj.len()
        )));
    }
    let diff = ci - cj;
    let q = (diff.transpose() * basis.derivative_gram(l)? * &diff)[(0, 0)];
    Ok(q.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDistanceMatrix {
    pub d: DMatrix<f64>,
    pub l: usize,
}

impl FunctionalDistanceMatrix {
    /// Lower triangle as `curve_a,curve_b,distance` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>, ids: &[String]) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["curve_a", "curve_b", "distance"])?;
        for i in 0..self.d.nrows() {
            for j in 0..i {
                w.write_record([ids[i].as_str(), ids[j].as_str(), &crate::curves::fmt_num(self.d[(i, j)])])?;
            }
        }
        w.flush().map_err(|e| FdError::io(path, e))
    }
}

pub fn functional_distance_matrix(coeffs: &CoefficientSet, l: usize) -> Result<FunctionalDistanceMatrix> {
    let z = metric_coordinates(coeffs, l)?;
    Ok(FunctionalDistanceMatrix {
        d: crate::mvclust::euclidean_distances(&z),
        l,
    })
}

/// k-means under `d_l`. Centroids are coefficient means and `wcss` is the
/// functional objective `Σ d_l(x_i, μ_m)²`.
pub fn functional_kmeans(coeffs: &CoefficientSet, m: usize, l: usize, restarts: usize, seed: u64) -> Result<Partition> {
    let z = metric_coordinates(coeffs, l)?;
    functional_kmeans_with_coordinates(coeffs, &z, m, restarts, seed)
}

fn functional_kmeans_with_coordinates(
    coeffs: &CoefficientSet,
    z: &DMatrix<f64>,
    m: usize,
    restarts: usize,
    seed: u64,
) -> Result<Partition> {
    let zp = kmeans(z, m, restarts, seed)?;
    let mut part = Partition::from_labels(&coeffs.coefficients, zp.labels, m)?;
    part.wcss = zp.wcss;
    Ok(part)
}

#[derive(Debug, Clone)]
pub struct FunctionalSelection {
    pub m: usize,
    pub partition: Partition,
    /// Mean silhouette width for every candidate M, ascending in M.
    pub silhouettes: Vec<(usize, f64)>,
}

/// Fit every M in range and keep the best mean silhouette (ties to the
/// smaller M).
pub fn select_m_functional(
    coeffs: &CoefficientSet,
    l: usize,
    m_range: &[usize],
    restarts: usize,
    seed: u64,
) -> Result<FunctionalSelection> {
    let n = coeffs.n_curves();
    let mut ms = m_range.to_vec();
    ms.sort_unstable();
    ms.dedup();
    if ms.is_empty() {
        return Err(FdError::invalid("empty cluster-count range"));
    }
    if ms[0] < 2 || *ms.last().unwrap() + 1 > n {
        return Err(FdError::invalid(format!(
            "cluster counts must lie in [2, {}]",
            n.saturating_sub(1)
        )));
    }
    let z = metric_coordinates(coeffs, l)?;
    let d = crate::mvclust::euclidean_distances(&z);
    let fits = par::map_indexed(ms.len(), |i| -> Result<(Partition, f64)> {
        let part = functional_kmeans_with_coordinates(coeffs, &z, ms[i], restarts, seed)?;
        let s = silhouette(&d, &part.labels)?.0;
        Ok((part, s))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, f) in fits.iter().enumerate() {
        if f.1 > fits[best].1 {
            best = i;
        }
    }
    let silhouettes = ms.iter().zip(&fits).map(|(&m, f)| (m, f.1)).collect();
    let partition = fits.into_iter().nth(best).expect("non-empty").0;
    Ok(FunctionalSelection {
        m: ms[best],
        partition,
        silhouettes,
    })
}
