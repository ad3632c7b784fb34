//! Multivariate clustering on any `n × p` feature matrix (sliced raw curves,
//! basis coefficients, FPCA scores), plus cluster validity indices.

mod gmm;
mod hierarchical;
mod kmeans;
mod validity;

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{FdError, Result};

pub use gmm::{gmm_em, CovarianceModel, GmmFit, GmmOptions};
pub use hierarchical::{agglomerate, hierarchical, Dendrogram, Linkage, Merge};
pub use kmeans::{kmeans, kmeans_detailed, KMeansFit, KMeansOptions};
pub use validity::{
    calinski_harabasz, dunn, euclidean_distances, select_m_majority, silhouette, IndexRow,
    MajorityMethod, MajoritySelection, ValidityIndex,
};

/// Hard partition of `n` observations into `n_clusters` non-empty groups.
///
/// Labels are 0-based in memory; CSV exports write them 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    /// `M × p` cluster means.
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squares.
    pub wcss: f64,
}

impl Partition {
    /// Build a partition from labels, computing the means and the WCSS.
    pub fn from_labels(x: &DMatrix<f64>, labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if labels.len() != x.nrows() {
            return Err(FdError::DimensionMismatch(format!(
                "{} labels for {} observations",
                labels.len(),
                x.nrows()
            )));
        }
        let centroids = cluster_means(x, &labels, n_clusters)?;
        let wcss = wcss(x, &labels, &centroids);
        Ok(Partition {
            labels,
            n_clusters,
            centroids,
            wcss,
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// `curve_id,cluster` with 1-based cluster numbers.
    pub fn write_csv(&self, path: impl AsRef<Path>, ids: &[String]) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["curve_id", "cluster"])?;
        for (id, l) in ids.iter().zip(&self.labels) {
            w.write_record([id.as_str(), &(l + 1).to_string()])?;
        }
        w.flush().map_err(|e| FdError::io(path, e))
    }
}

/// Means of every cluster; errors if a cluster is empty.
pub fn cluster_means(x: &DMatrix<f64>, labels: &[usize], n_clusters: usize) -> Result<DMatrix<f64>> {
    let mut sums = DMatrix::zeros(n_clusters, x.ncols());
    let mut counts = vec![0usize; n_clusters];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_clusters {
            return Err(FdError::invalid(format!("label {l} ≥ cluster count {n_clusters}")));
        }
        counts[l] += 1;
        let mut row = sums.row_mut(l);
        row += x.row(i);
    }
    for (m, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(FdError::invalid(format!("cluster {m} is empty")));
        }
        sums.row_mut(m).scale_mut(1.0 / c as f64);
    }
    Ok(sums)
}

pub fn wcss(x: &DMatrix<f64>, labels: &[usize], centroids: &DMatrix<f64>) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (x.row(i) - centroids.row(l)).norm_squared())
        .sum()
}

/// Number of distinct labels, requiring them to be exactly `0..M`.
pub(crate) fn label_count(labels: &[usize]) -> Result<usize> {
    let m = labels.iter().max().map(|&l| l + 1).unwrap_or(0);
    let mut seen = vec![false; m];
    for &l in labels {
        seen[l] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(FdError::invalid("labels must cover 0..M without gaps"));
    }
    Ok(m)
}

/// Optional z-scoring of feature columns (constant columns are centered only).
pub fn standardize_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let sd = var.sqrt();
        for v in col.iter_mut() {
            *v = if sd > 0.0 { (*v - mean) / sd } else { *v - mean };
        }
    }
    out
}
