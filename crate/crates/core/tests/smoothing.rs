mod common;

use fdclust::basis::{
    default_lambda_grid, fit_penalized, make_bspline_basis, select_lambda_gcv, smooth_curveset, LambdaChoice,
};
use fdclust::basis::CoefficientSet;
use fdclust::curves::{generate_synthetic, CurveSet, SyntheticConfig};
use fdclust::fpca::{fpca, reconstruct, select_components};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn grid(a: f64, b: f64, m: usize) -> Vec<f64> {
    (0..m).map(|j| a + (b - a) * j as f64 / (m - 1) as f64).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn cubics_are_reproduced_without_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for &(k, m) in &[(4, 10), (8, 40), (12, 238), (30, 100)] {
        let t = grid(0.0, 237.0, m);
        let basis = make_bspline_basis((0.0, 237.0), k, 4).unwrap();
        for _ in 0..5 {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let f = |x: f64| {
                let u = x / 237.0;
                c[0] + c[1] * u + c[2] * u * u + c[3] * u * u * u
            };
            let y: Vec<f64> = t.iter().map(|&x| f(x)).collect();
            let fit = fit_penalized(&y, &t, &basis, 0.0).unwrap();
            let yhat = basis.eval(&t, 0).unwrap() * &fit.coefficients;
            for (a, b) in yhat.iter().zip(&y) {
                assert!((a - b).abs() < 1e-8, "K={k}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn lines_cost_nothing_under_the_penalty() {
    let basis = make_bspline_basis((0.0, 237.0), 20, 4).unwrap();
    let t = grid(0.0, 237.0, 238);
    let y: Vec<f64> = t.iter().map(|x| 3.0 - 0.02 * x).collect();
    for lambda in [0.0, 1e-3, 1.0, 1e4] {
        let fit = fit_penalized(&y, &t, &basis, lambda).unwrap();
        let c = &fit.coefficients;
        let q = (c.transpose() * basis.penalty() * c)[(0, 0)];
        assert!(q.abs() <= 1e-8, "λ={lambda}: {q}");
        let yhat = basis.eval(&t, 0).unwrap() * c;
        assert!(yhat.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-8));
    }
}

#[test]
fn gcv_matches_dense_hat_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &(k, m) in &[(6, 20), (12, 50), (15, 33)] {
        let t = grid(0.0, m as f64 - 1.0, m);
        let basis = make_bspline_basis((0.0, m as f64 - 1.0), k, 4).unwrap();
        let s = basis.eval(&t, 0).unwrap();
        let r = basis.penalty();
        let y = DVector::from_fn(m, |j, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (t[j] / 5.0).sin() + 0.1 * z
        });
        let yv: Vec<f64> = y.iter().copied().collect();
        for lambda in default_lambda_grid() {
            let fit = fit_penalized(&yv, &t, &basis, lambda).unwrap();
            let (df, sse, gcv) = common::dense_hat(&s, &r, lambda, &y);
            assert!(close(fit.df, df, 1e-10), "K={k} λ={lambda}: df {} vs {df}", fit.df);
            assert!(close(fit.sse, sse, 1e-10), "K={k} λ={lambda}: sse {} vs {sse}", fit.sse);
            assert!(close(fit.gcv, gcv, 1e-10), "K={k} λ={lambda}: gcv {} vs {gcv}", fit.gcv);
        }
    }
}

#[test]
fn gcv_choice_is_the_grid_minimiser() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = grid(0.0, 1.0, 60);
    let basis = make_bspline_basis((0.0, 1.0), 25, 4).unwrap();
    let y: Vec<f64> = t
        .iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (6.0 * x).cos() + 0.2 * z
        })
        .collect();
    let lambdas = default_lambda_grid();
    let (best, fit) = select_lambda_gcv(&y, &t, &basis, &lambdas).unwrap();
    for &l in &lambdas {
        let g = fit_penalized(&y, &t, &basis, l).unwrap().gcv;
        assert!(fit.gcv <= g * (1.0 + 1e-10), "λ={l} beats λ*={best}");
    }
    assert!(best > lambdas[0] && best < lambdas[40]);
}

fn toy(n: usize, k: usize, seed: u64) -> CoefficientSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = make_bspline_basis((0.0, 2.0), k, 3.min(k)).unwrap();
    let c = DMatrix::from_fn(n, k, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    CoefficientSet::new((0..n).map(|i| format!("c{i}")).collect(), c, basis).unwrap()
}

#[test]
fn fpca_matches_dense_metric_eigenproblem() {
    for seed in 0..10 {
        let cs = toy(5, 4, seed);
        let model = fpca(&cs).unwrap();
        let w = cs.basis.gram();
        let wh = common::sqrtm(w);
        let n = cs.n_curves();
        let mean = DVector::from_fn(4, |j, _| cs.coefficients.column(j).mean());
        let centered = DMatrix::from_fn(n, 4, |i, j| cs.coefficients[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let (vals, vecs) = common::jacobi_eigen(&(&wh * cov * &wh));
        let wh_inv = wh.clone().try_inverse().unwrap();
        for j in 0..model.eigenvalues.len() {
            assert!((model.eigenvalues[j] - vals[j]).abs() < 1e-8, "seed {seed} λ{j}");
            let psi = &wh_inv * vecs.column(j);
            let scores = &centered * w * &psi;
            let mine = model.scores.column(j);
            let sign = if mine.dot(&scores) < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                assert!((mine[i] - sign * scores[i]).abs() < 1e-8, "seed {seed} score ({i},{j})");
            }
        }
    }
}

#[test]
fn rank_l_data_keeps_l_components() {
    let basis = make_bspline_basis((0.0, 237.0), 20, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for l in 1..=5 {
        let dirs = DMatrix::from_fn(l, 20, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let scores = DMatrix::from_fn(60, l, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let c = scores * dirs;
        let set = CoefficientSet::new((0..60).map(|i| format!("r{i}")).collect(), c, basis.clone()).unwrap();
        let model = fpca(&set).unwrap();
        assert_eq!(model.rank, l);
        assert_eq!(select_components(&model, 0.99).unwrap(), l);
        assert_eq!(select_components(&model, 1.0).unwrap(), l);
        let back = reconstruct(&model, l).unwrap();
        assert!((back.coefficients - &set.coefficients).abs().max() < 1e-8);
    }
}

#[test]
fn synthetic_drc_smoothing_is_stable() {
    let data = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let cs: &CurveSet = &data.curves;
    let basis = make_bspline_basis(cs.domain(), 100, 4).unwrap();
    let coeffs = smooth_curveset(cs, &basis, &LambdaChoice::gcv_default()).unwrap();
    let fitted = coeffs.evaluate(cs.grid()).unwrap();
    let resid = (fitted - cs.values()).norm_squared() / (cs.n_curves() * cs.n_points()) as f64;
    // noise variance is 1; GCV should leave roughly that much behind
    assert!(resid > 0.5 && resid < 1.2, "{resid}");
    let model = fpca(&coeffs).unwrap();
    let l = select_components(&model, 0.99).unwrap();
    assert!((1..=10).contains(&l), "{l}");
}

/// Runs only when `FDCLUST_DRC_CSV` points at the published curve file.
#[test]
fn published_data_keeps_six_components() {
    let Ok(path) = std::env::var("FDCLUST_DRC_CSV") else {
        eprintln!("FDCLUST_DRC_CSV not set; skipping");
        return;
    };
    let cs = fdclust::curves::load_curveset(path).unwrap();
    let basis = make_bspline_basis(cs.domain(), 100, 4).unwrap();
    let coeffs = smooth_curveset(&cs, &basis, &LambdaChoice::gcv_default()).unwrap();
    let model = fpca(&coeffs).unwrap();
    assert_eq!(select_components(&model, 0.99).unwrap(), 6);
}
