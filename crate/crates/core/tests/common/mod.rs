//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls the library's own numerics for
//! the quantity under test.
#![allow(dead_code)]

use fdclust::adaptive::simulate::{fclust_data, funhddc_data, waveclust_data};
use fdclust::adaptive::{FclustModel, FunHddcModel, HddcGroup, WaveletModel};
use fdclust::basis::{make_bspline_basis, BasisSystem, CoefficientSet};
use fdclust::curves::CurveSet;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const LN_2PI: f64 = 1.8378770664093453;

/// Cyclic Jacobi eigendecomposition; eigenvalues descending.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap());
    let vals = order.iter().map(|&i| m[(i, i)]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (vals, vecs)
}

/// Symmetric square root of a PSD matrix through the Jacobi oracle.
pub fn sqrtm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = jacobi_eigen(a);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0).sqrt())));
    &vecs * d * vecs.transpose()
}

/// Explicit hat matrix `S (SᵀS + λR)⁻¹ Sᵀ` by a general inverse; returns
/// `(df, sse, gcv)` for data `y`.
pub fn dense_hat(s: &DMatrix<f64>, r: &DMatrix<f64>, lambda: f64, y: &DVector<f64>) -> (f64, f64, f64) {
    let a = s.transpose() * s + r * lambda;
    let inv = a.lu().try_inverse().expect("invertible normal matrix");
    let h = s * inv * s.transpose();
    let df = h.trace();
    let resid = y - &h * y;
    let sse = resid.norm_squared();
    let m = y.len() as f64;
    let gcv = (sse / m) / (1.0 - df / m).powi(2);
    (df, sse, gcv)
}

/// Minimum WCSS over every split of the rows into two non-empty groups.
pub fn brute_force_two_means(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << (n - 1)) {
        let mut total = 0.0;
        for side in [true, false] {
            let rows: Vec<usize> = (0..n).filter(|&i| ((mask >> i) & 1 == 1) == side).collect();
            let mut mean = DVector::zeros(x.ncols());
            for &i in &rows {
                mean += x.row(i).transpose();
            }
            mean /= rows.len() as f64;
            total += rows.iter().map(|&i| (x.row(i).transpose() - &mean).norm_squared()).sum::<f64>();
        }
        best = best.min(total);
    }
    best
}

/// Ward merge heights `sqrt(2 n_a n_b/(n_a + n_b)) ‖μ_a − μ_b‖` by
/// recomputing every cluster pair from scratch at each step.
pub fn naive_ward_heights(x: &DMatrix<f64>) -> Vec<f64> {
    let mut clusters: Vec<Vec<usize>> = (0..x.nrows()).map(|i| vec![i]).collect();
    let mean = |c: &Vec<usize>| {
        let mut m = DVector::zeros(x.ncols());
        for &i in c {
            m += x.row(i).transpose();
        }
        m / c.len() as f64
    };
    let mut heights = Vec::new();
    while clusters.len() > 1 {
        let mut best = (0, 1, f64::INFINITY);
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let (na, nb) = (clusters[a].len() as f64, clusters[b].len() as f64);
                let d = (2.0 * na * nb / (na + nb)).sqrt() * (mean(&clusters[a]) - mean(&clusters[b])).norm();
                if d < best.2 {
                    best = (a, b, d);
                }
            }
        }
        let merged = clusters.remove(best.1);
        clusters[best.0].extend(merged);
        heights.push(best.2);
    }
    heights
}

pub fn trapezoid(grid: &[f64], f: &[f64]) -> f64 {
    grid.windows(2)
        .zip(f.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// ARI from the four pair-agreement counts.
pub fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
    let (mut n11, mut n10, mut n01, mut n00) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => n11 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
                (false, false) => n00 += 1.0,
            }
        }
    }
    2.0 * (n11 * n00 - n10 * n01) / ((n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00))
}

fn log_sum(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn dense_gaussian_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let chol = cov.clone().cholesky().expect("positive definite covariance");
    let z = chol.l().solve_lower_triangular(&(x - mean)).unwrap();
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (x.len() as f64 * LN_2PI + logdet + z.norm_squared())
}

/// Mixture log-likelihood with the full `m × m` marginal covariance.
pub fn dense_fclust_loglik(model: &FclustModel, cs: &CurveSet) -> f64 {
    let s = model.basis.eval(cs.grid(), 0).unwrap();
    let m = cs.n_points();
    let cov = DMatrix::identity(m, m) * model.sigma.powi(2) + &s * &model.gamma * s.transpose();
    let means: Vec<DVector<f64>> = (0..model.weights.len())
        .map(|c| &s * model.mu.row(c).transpose())
        .collect();
    (0..cs.n_curves())
        .map(|i| {
            let x = DVector::from_vec(cs.curve(i));
            let terms: Vec<f64> = means
                .iter()
                .zip(&model.weights)
                .map(|(mu, w)| w.ln() + dense_gaussian_logpdf(&x, mu, &cov))
                .collect();
            log_sum(&terms)
        })
        .sum()
}

/// Mixture log-likelihood with dense `Q Δ Qᵀ` covariances.
pub fn dense_funhddc_loglik(model: &FunHddcModel, coeffs: &CoefficientSet) -> f64 {
    let y = &coeffs.coefficients * &model.transform;
    let covs: Vec<DMatrix<f64>> = model.groups.iter().map(HddcGroup::covariance).collect();
    (0..y.nrows())
        .map(|i| {
            let x = y.row(i).transpose();
            let terms: Vec<f64> = model
                .groups
                .iter()
                .zip(&covs)
                .zip(&model.weights)
                .map(|((g, cov), w)| w.ln() + dense_gaussian_logpdf(&x, &g.mean, cov))
                .collect();
            log_sum(&terms)
        })
        .sum()
}

/// Mixture log-likelihood as a product of univariate normal densities per
/// wavelet coefficient.
pub fn per_coordinate_waveclust_loglik(model: &WaveletModel, y: &DMatrix<f64>) -> f64 {
    let mm = model.weights.len();
    let vars: Vec<Vec<f64>> = (0..mm).map(|c| model.coefficient_variances(c)).collect();
    (0..y.nrows())
        .map(|i| {
            let terms: Vec<f64> = (0..mm)
                .map(|c| {
                    let mut lp = model.weights[c].ln();
                    for j in 0..y.ncols() {
                        lp += normal_ln_pdf(y[(i, j)], model.means[(c, j)], vars[c][j].sqrt());
                    }
                    lp
                })
                .collect();
            log_sum(&terms)
        })
        .sum()
}

fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (LN_2PI + z * z) - sd.ln()
}

// ----- fixtures -----

pub const PER_CLUSTER: usize = 50;

/// Three spline-mixture clusters whose means differ by a level shift of 8
/// while the marginal SD is at most `sqrt(0.25 + 0.25)`.
pub fn fclust_fixture(seed: u64) -> (CurveSet, Vec<usize>, BasisSystem, f64) {
    let basis = make_bspline_basis((0.0, 1.0), 6, 4).unwrap();
    let grid: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
    let shape = [0.0, 2.0, -1.0, 3.0, 1.0, 0.0];
    let mu = DMatrix::from_fn(3, 6, |m, k| shape[k] + 8.0 * m as f64);
    let gamma = DMatrix::identity(6, 6) * 0.25;
    let sigma = 0.5;
    let (cs, labels) = fclust_data(&basis, &grid, &mu, &gamma, sigma, PER_CLUSTER, seed).unwrap();
    (cs, labels, basis, sigma)
}

/// Three wavelet-domain clusters on 64 samples, separated by 8 in one
/// coarse coefficient each against a marginal SD of `sqrt(0.5)`.
pub fn waveclust_fixture(seed: u64) -> (CurveSet, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let base: Vec<f64> = (0..64).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut means = DMatrix::from_fn(3, 64, |_, j| base[j]);
    means[(1, 0)] += 8.0;
    means[(2, 1)] += 8.0;
    waveclust_data(&means, &[0.25, 0.25, 0.25], 0.25, PER_CLUSTER, seed).unwrap()
}

fn orthogonal(k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
    a.qr().q()
}

/// Three groups in two-dimensional subspaces (`a = 4, 2`, `b = 0.05`) with
/// means 25 apart.
pub fn funhddc_fixture(seed: u64) -> (CoefficientSet, Vec<usize>) {
    let k = 6;
    let basis = make_bspline_basis((0.0, 1.0), k, 4).unwrap();
    let groups: Vec<HddcGroup> = (0..3)
        .map(|c| {
            let mut mean = DVector::zeros(k);
            if c > 0 {
                mean[c - 1] = 25.0;
            }
            HddcGroup {
                mean,
                q: orthogonal(k, 77 + c as u64),
                d: 2,
                a: vec![4.0, 2.0],
                b: 0.05,
            }
        })
        .collect();
    funhddc_data(&basis, &groups, PER_CLUSTER, seed).unwrap()
}

/// Unstructured Gaussian curves.
pub fn noise_curves(n: usize, m: usize, seed: u64) -> CurveSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
    let grid = (0..m).map(|t| t as f64 / (m - 1) as f64).collect();
    CurveSet::new(grid, values, (0..n).map(|i| format!("r{i}")).collect()).unwrap()
}
