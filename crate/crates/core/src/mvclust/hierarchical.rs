use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::Partition;
use crate::error::{FdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    Average,
    Ward,
}

impl FromStr for Linkage {
    type Err = FdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            "ward" => Ok(Linkage::Ward),
            other => Err(FdError::invalid(format!("unknown linkage '{other}'"))),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
            Linkage::Ward => "ward",
        };
        f.write_str(s)
    }
}

/// One agglomeration step. Clusters are named by their smallest member
/// index; `a < b` and the merged cluster keeps the name `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    /// Size of the merged cluster.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
}

/// Full agglomeration by Lance–Williams updates.
///
/// Ward works on squared Euclidean dissimilarities and reports `sqrt` of
/// them as heights; the other linkages use plain Euclidean distances. The
/// pair with the smallest dissimilarity merges first, ties going to the
/// lexicographically smallest `(a, b)`.
pub fn agglomerate(x: &DMatrix<f64>, linkage: Linkage) -> Result<Dendrogram> {
    let n = x.nrows();
    if n == 0 {
        return Err(FdError::invalid("no observations to cluster"));
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let sq = (x.row(i) - x.row(j)).norm_squared();
            let v = if linkage == Linkage::Ward { sq } else { sq.sqrt() };
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut best = (usize::MAX, usize::MAX);
        let mut bd = f64::INFINITY;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if active[j] && d[i * n + j] < bd {
                    bd = d[i * n + j];
                    best = (i, j);
                }
            }
        }
        let (a, b) = best;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let (dak, dbk) = (d[a * n + k], d[b * n + k]);
            let nk = size[k] as f64;
            let v = match linkage {
                Linkage::Single => dak.min(dbk),
                Linkage::Complete => dak.max(dbk),
                Linkage::Average => (na * dak + nb * dbk) / (na + nb),
                Linkage::Ward => ((na + nk) * dak + (nb + nk) * dbk - nk * bd) / (na + nb + nk),
            };
            d[a * n + k] = v;
            d[k * n + a] = v;
        }
        active[b] = false;
        size[a] += size[b];
        let height = if linkage == Linkage::Ward { bd.max(0.0).sqrt() } else { bd };
        merges.push(Merge {
            a,
            b,
            height,
            size: size[a],
        });
    }
    Ok(Dendrogram { n, linkage, merges })
}

impl Dendrogram {
    /// Labels after the first `n − m` merges, numbered by the smallest
    /// member index of each cluster.
    pub fn cut(&self, m: usize) -> Result<Vec<usize>> {
        if m == 0 || m > self.n {
            return Err(FdError::invalid(format!(
                "cannot cut {} observations into {m} clusters",
                self.n
            )));
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        for mg in &self.merges[..self.n - m] {
            parent[mg.b] = mg.a;
        }
        fn root(parent: &[usize], mut i: usize) -> usize {
            while parent[i] != i {
                i = parent[i];
            }
            i
        }
        let mut name = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut labels = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let r = root(&parent, i);
            if name[r] == usize::MAX {
                name[r] = next;
                next += 1;
            }
            labels.push(name[r]);
        }
        Ok(labels)
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }
}

pub fn hierarchical(x: &DMatrix<f64>, linkage: Linkage, m: usize) -> Result<Partition> {
    if m == 0 || m > x.nrows() {
        return Err(FdError::invalid(format!(
            "cannot form {m} clusters from {} observations",
            x.nrows()
        )));
    }
    let tree = agglomerate(x, linkage)?;
    Partition::from_labels(x, tree.cut(m)?, m)
}
