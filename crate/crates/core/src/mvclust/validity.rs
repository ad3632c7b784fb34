use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::hierarchical::{agglomerate, Linkage};
use super::kmeans::kmeans;
use super::{label_count, Partition};
use crate::error::{FdError, Result};
use crate::linalg::column_means;
use crate::par;

/// Pairwise Euclidean distances between the rows of `x`.
pub fn euclidean_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let rows = par::map_indexed(n, |i| {
        (0..n)
            .map(|j| (x.row(i) - x.row(j)).norm())
            .collect::<Vec<_>>()
    });
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rows[i.min(j)][i.max(j)] })
}

fn check(d: &DMatrix<f64>, labels: &[usize]) -> Result<usize> {
    if d.nrows() != d.ncols() || d.nrows() != labels.len() {
        return Err(FdError::DimensionMismatch(format!(
            "{}×{} distance matrix for {} labels",
            d.nrows(),
            d.ncols(),
            labels.len()
        )));
    }
    let m = label_count(labels)?;
    if m < 2 {
        return Err(FdError::invalid("validity index needs at least two clusters"));
    }
    Ok(m)
}

/// Mean silhouette width and the per-point widths.
///
/// Points in singleton clusters get width 0, as does a point with
/// `a = b = 0`.
pub fn silhouette(d: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let m = check(d, labels)?;
    let n = labels.len();
    let mut sizes = vec![0usize; m];
    for &l in labels {
        sizes[l] += 1;
    }
    let widths = par::map_indexed(n, |i| {
        let own = labels[i];
        if sizes[own] == 1 {
            return 0.0;
        }
        let mut sums = vec![0.0; m];
        for j in 0..n {
            sums[labels[j]] += d[(i, j)];
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..m)
            .filter(|&k| k != own)
            .map(|k| sums[k] / sizes[k] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            (b - a) / denom
        } else {
            0.0
        }
    });
    let mean = widths.iter().sum::<f64>() / n as f64;
    Ok((mean, widths))
}

/// Smallest between-cluster distance over the largest cluster diameter;
/// `+∞` when every cluster has zero diameter.
pub fn dunn(d: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    check(d, labels)?;
    let n = labels.len();
    let mut sep = f64::INFINITY;
    let mut diam: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                diam = diam.max(d[(i, j)]);
            } else {
                sep = sep.min(d[(i, j)]);
            }
        }
    }
    Ok(if diam > 0.0 { sep / diam } else { f64::INFINITY })
}

/// Between/within variance ratio `[B/(M−1)] / [W/(n−M)]`; `+∞` when the
/// within-cluster scatter is zero.
pub fn calinski_harabasz(x: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(FdError::DimensionMismatch(format!(
            "{} labels for {n} observations",
            labels.len()
        )));
    }
    let m = label_count(labels)?;
    if m < 2 || m >= n {
        return Err(FdError::invalid(format!(
            "Calinski–Harabasz needs 2 ≤ M < n, got M={m}, n={n}"
        )));
    }
    let p = Partition::from_labels(x, labels.to_vec(), m)?;
    let grand = column_means(x);
    let between: f64 = p
        .sizes()
        .iter()
        .enumerate()
        .map(|(k, &s)| s as f64 * (p.centroids.row(k).transpose() - &grand).norm_squared())
        .sum();
    if p.wcss == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (m - 1) as f64) / (p.wcss / (n - m) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityIndex {
    Silhouette,
    Dunn,
    CalinskiHarabasz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MajorityMethod {
    Kmeans { restarts: usize },
    Hierarchical { linkage: Linkage },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub m: usize,
    pub silhouette: f64,
    pub dunn: f64,
    pub calinski_harabasz: f64,
}

#[derive(Debug, Clone)]
pub struct MajoritySelection {
    pub m: usize,
    pub votes: Vec<(ValidityIndex, usize)>,
    pub table: Vec<IndexRow>,
    pub partition: Partition,
}

fn argmax_first(ms: &[usize], vals: impl Iterator<Item = f64>) -> usize {
    let mut best = (ms[0], f64::NEG_INFINITY);
    for (&m, v) in ms.iter().zip(vals) {
        if v > best.1 {
            best = (m, v);
        }
    }
    best.0
}

/// Each index votes for the M it rates best; the most voted M wins, ties
/// going to the smaller M.
pub fn select_m_majority(
    x: &DMatrix<f64>,
    method: MajorityMethod,
    m_range: &[usize],
    seed: u64,
) -> Result<MajoritySelection> {
    let n = x.nrows();
    if m_range.is_empty() {
        return Err(FdError::invalid("empty cluster-count range"));
    }
    let mut ms = m_range.to_vec();
    ms.sort_unstable();
    ms.dedup();
    if ms[0] < 2 || *ms.last().unwrap() + 1 > n {
        return Err(FdError::invalid(format!(
            "cluster counts must lie in [2, {}]",
            n.saturating_sub(1)
        )));
    }
    let tree = match method {
        MajorityMethod::Hierarchical { linkage } => Some(agglomerate(x, linkage)?),
        MajorityMethod::Kmeans { .. } => None,
    };
    let d = euclidean_distances(x);
    let fits = ms
        .iter()
        .map(|&m| {
            let part = match (&tree, method) {
                (Some(t), _) => Partition::from_labels(x, t.cut(m)?, m)?,
                (None, MajorityMethod::Kmeans { restarts }) => kmeans(x, m, restarts, seed)?,
                (None, _) => unreachable!(),
            };
            let row = IndexRow {
                m,
                silhouette: silhouette(&d, &part.labels)?.0,
                dunn: dunn(&d, &part.labels)?,
                calinski_harabasz: calinski_harabasz(x, &part.labels)?,
            };
            Ok((row, part))
        })
        .collect::<Result<Vec<_>>>()?;
    let table: Vec<IndexRow> = fits.iter().map(|f| f.0).collect();
    let votes = vec![
        (ValidityIndex::Silhouette, argmax_first(&ms, table.iter().map(|r| r.silhouette))),
        (ValidityIndex::Dunn, argmax_first(&ms, table.iter().map(|r| r.dunn))),
        (
            ValidityIndex::CalinskiHarabasz,
            argmax_first(&ms, table.iter().map(|r| r.calinski_harabasz)),
        ),
    ];
    let mut chosen = ms[0];
    let mut most = 0;
    for &m in &ms {
        let c = votes.iter().filter(|v| v.1 == m).count();
        if c > most {
            most = c;
            chosen = m;
        }
    }
    let partition = fits
        .into_iter()
        .find(|f| f.0.m == chosen)
        .map(|f| f.1)
        .expect("chosen M is in range");
    Ok(MajoritySelection {
        m: chosen,
        votes,
        table,
        partition,
    })
}
