use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cluster_means, wcss, Partition};
use crate::error::{FdError, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            restarts: 20,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub partition: Partition,
    /// Index of the winning restart.
    pub best_run: usize,
    /// Final WCSS of every restart.
    pub run_wcss: Vec<f64>,
    /// WCSS after every Lloyd iteration of the winning restart.
    pub trace: Vec<f64>,
}

/// Best-of-`restarts` k-means with k-means++ seeding, Lloyd iterations and a
/// final single-point transfer pass.
pub fn kmeans(x: &DMatrix<f64>, m: usize, restarts: usize, seed: u64) -> Result<Partition> {
    let opts = KMeansOptions {
        restarts,
        seed,
        ..Default::default()
    };
    Ok(kmeans_detailed(x, m, &opts)?.partition)
}

/// Restart `r` draws from ChaCha8 seeded with `seed` on stream `r`, so runs
/// are reproducible and independent of execution order. The winner is the
/// lowest WCSS, ties to the lower restart index.
pub fn kmeans_detailed(x: &DMatrix<f64>, m: usize, opts: &KMeansOptions) -> Result<KMeansFit> {
    let n = x.nrows();
    if x.ncols() == 0 {
        return Err(FdError::invalid("k-means needs at least one feature"));
    }
    if m == 0 || m > n {
        return Err(FdError::invalid(format!(
            "cannot form {m} clusters from {n} observations"
        )));
    }
    let restarts = opts.restarts.max(1);
    let runs = par::map_indexed(restarts, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64);
        lloyd(x, m, plus_plus(x, m, &mut rng), opts.max_iter)
    });
    let mut best = 0;
    for r in 1..restarts {
        if runs[r].1 < runs[best].1 {
            best = r;
        }
    }
    let run_wcss = runs.iter().map(|r| r.1).collect();
    let (labels, _, trace) = runs.into_iter().nth(best).expect("at least one restart");
    Ok(KMeansFit {
        partition: Partition::from_labels(x, labels, m)?,
        best_run: best,
        run_wcss,
        trace,
    })
}

fn sq_dist(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, k: usize) -> f64 {
    x.row(i)
        .iter()
        .zip(c.row(k).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// k-means++ seeding: returns the indices of the initial centers.
fn plus_plus(x: &DMatrix<f64>, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x, i, x, chosen[0])).collect();
    while chosen.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // every point coincides with a center: take the first unused index
            (0..n).find(|i| !chosen.contains(i)).expect("m ≤ n")
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x, i, x, next));
        }
    }
    chosen
}

/// Lloyd iterations. An empty cluster is re-seeded at the point farthest
/// from its current centroid (lowest index on ties) taken from a cluster
/// with at least two members.
fn lloyd(x: &DMatrix<f64>, m: usize, seeds: Vec<usize>, max_iter: usize) -> (Vec<usize>, f64, Vec<f64>) {
    let n = x.nrows();
    let mut centroids = x.select_rows(&seeds);
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut next = vec![0usize; n];
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let mut best = 0;
            let mut bd = sq_dist(x, i, &centroids, 0);
            for k in 1..m {
                let d = sq_dist(x, i, &centroids, k);
                if d < bd {
                    bd = d;
                    best = k;
                }
            }
            next[i] = best;
            dist[i] = bd;
        }
        let mut counts = vec![0usize; m];
        for &l in &next {
            counts[l] += 1;
        }
        for k in 0..m {
            if counts[k] > 0 {
                continue;
            }
            let mut far = None;
            for i in 0..n {
                if counts[next[i]] > 1 && far.is_none_or(|f: usize| dist[i] > dist[f]) {
                    far = Some(i);
                }
            }
            let i = far.expect("m ≤ n leaves a donor cluster");
            counts[next[i]] -= 1;
            next[i] = k;
            counts[k] = 1;
            dist[i] = 0.0;
        }
        centroids = cluster_means(x, &next, m).expect("all clusters non-empty");
        trace.push(wcss(x, &next, &centroids));
        let changed = next != labels;
        labels = next;
        if !changed {
            break;
        }
    }
    if transfer(x, &mut labels, &mut centroids, m) {
        trace.push(wcss(x, &labels, &centroids));
    }
    let obj = *trace.last().expect("at least one iteration");
    (labels, obj, trace)
}

/// Single-point transfers (Hartigan's criterion) after Lloyd has settled.
/// Moving `i` from `a` to `b` lowers the WCSS exactly when
/// `n_b/(n_b+1)·‖x_i − c_b‖² < n_a/(n_a−1)·‖x_i − c_a‖²`. Every Lloyd fixed
/// point that survives this is also a transfer fixed point, so the result
/// is never worse. Returns whether anything moved.
fn transfer(x: &DMatrix<f64>, labels: &mut [usize], centroids: &mut DMatrix<f64>, m: usize) -> bool {
    let n = x.nrows();
    let mut counts = vec![0usize; m];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for i in 0..n {
            let a = labels[i];
            if counts[a] < 2 {
                continue;
            }
            let na = counts[a] as f64;
            let removal = na / (na - 1.0) * sq_dist(x, i, centroids, a);
            let mut best = None;
            let mut best_cost = removal;
            for b in (0..m).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let cost = nb / (nb + 1.0) * sq_dist(x, i, centroids, b);
                if cost < best_cost * (1.0 - 1e-12) {
                    best_cost = cost;
                    best = Some(b);
                }
            }
            let Some(b) = best else { continue };
            let nb = counts[b] as f64;
            for j in 0..x.ncols() {
                let v = x[(i, j)];
                centroids[(a, j)] = (centroids[(a, j)] * na - v) / (na - 1.0);
                centroids[(b, j)] = (centroids[(b, j)] * nb + v) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            labels[i] = b;
            moved = true;
        }
        if !moved {
            break;
        }
        moved_any = true;
    }
    if moved_any {
        // drop the drift of the incremental updates
        *centroids = cluster_means(x, labels, m).expect("transfers keep clusters non-empty");
    }
    moved_any
}
