mod common;

use fdclust::adaptive::wavelet::{haar_dwt, haar_idwt};
use fdclust::basis::{fit_penalized, make_bspline_basis, CoefficientSet};
use fdclust::curves::{generate_synthetic, subsample_grid, CurveSet, SyntheticConfig};
use fdclust::fpca::fpca;
use fdclust::funclust::functional_kmeans;
use fdclust::mvclust::{
    agglomerate, dunn, euclidean_distances, gmm_em, kmeans_detailed, silhouette, CovarianceModel, GmmOptions,
    KMeansOptions, Linkage, Partition,
};
use fdclust::pipeline::adjusted_rand_index;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-10.0..10.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, n)
}

fn relabel(labels: &[usize], perm: &[usize]) -> Vec<usize> {
    labels.iter().map(|&l| perm[l]).collect()
}

fn coeff_set(c: DMatrix<f64>) -> CoefficientSet {
    let k = c.ncols();
    let basis = make_bspline_basis((0.0, 3.0), k, 4).unwrap();
    CoefficientSet::new((0..c.nrows()).map(|i| format!("p{i}")).collect(), c, basis).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subsampling_keeps_every_step(m in 2usize..60, step in 1usize..30, v in matrix(3, 60)) {
        let grid: Vec<f64> = (0..m).map(|j| j as f64 * 0.5).collect();
        let cs = CurveSet::new(grid, v.columns(0, m).into_owned(), vec!["a".into(), "b".into(), "c".into()]).unwrap();
        prop_assert_eq!(&subsample_grid(&cs, 1).unwrap(), &cs);
        match subsample_grid(&cs, step) {
            Ok(sub) => {
                prop_assert_eq!(sub.n_points(), 1 + (m - 1) / step);
                prop_assert_eq!(sub.grid()[1], cs.grid()[step]);
            }
            Err(_) => prop_assert!(step >= m || 1 + (m - 1) / step < 2),
        }
    }

    #[test]
    fn noiseless_synthetic_clusters_are_constant(seed in any::<u64>(), per in 1usize..5) {
        let data = generate_synthetic(&SyntheticConfig { n_per_cluster: per, noise_sd: 0.0, seed, ..Default::default() }).unwrap();
        let v = data.curves.values();
        for i in 0..v.nrows() {
            let first = data.labels.iter().position(|&l| l == data.labels[i]).unwrap();
            prop_assert_eq!(v.row(i), v.row(first));
        }
    }

    #[test]
    fn df_is_non_increasing_in_lambda(y in prop::collection::vec(-5.0..5.0f64, 30), k in 4usize..20) {
        let t: Vec<f64> = (0..30).map(|j| j as f64).collect();
        let basis = make_bspline_basis((0.0, 29.0), k, 4).unwrap();
        let mut last = f64::INFINITY;
        for e in -4..=6 {
            let df = fit_penalized(&y, &t, &basis, 10f64.powi(e)).unwrap().df;
            prop_assert!(df <= last + 1e-10, "λ=1e{}: {} after {}", e, df, last);
            last = df;
        }
    }

    #[test]
    fn fits_survive_affine_time_changes(
        y in prop::collection::vec(-5.0..5.0f64, 25),
        shift in -100.0..100.0f64,
        scale in 0.1..20.0f64,
        lambda in prop::sample::select(vec![0.0, 1e-2, 1.0, 1e2]),
    ) {
        let t: Vec<f64> = (0..25).map(|j| j as f64 / 24.0).collect();
        let u: Vec<f64> = t.iter().map(|x| shift + scale * x).collect();
        let a = make_bspline_basis((0.0, 1.0), 10, 4).unwrap();
        let b = make_bspline_basis((shift, shift + scale), 10, 4).unwrap();
        // ∫(f'')² picks up scale⁻³ under t ↦ shift + scale·t
        let fa = fit_penalized(&y, &t, &a, lambda).unwrap();
        let fb = fit_penalized(&y, &u, &b, lambda * scale.powi(3)).unwrap();
        let ya = a.eval(&t, 0).unwrap() * &fa.coefficients;
        let yb = b.eval(&u, 0).unwrap() * &fb.coefficients;
        prop_assert!((ya - yb).abs().max() < 1e-10);
    }

    #[test]
    fn fpca_scores_and_variance_identities(c in matrix(8, 6)) {
        let set = coeff_set(c);
        let model = fpca(&set).unwrap();
        let w = set.basis.gram();
        let centered = DMatrix::from_fn(8, 6, |i, j| set.coefficients[(i, j)] - model.mean_coeffs[j]);
        let scores = &centered * w * model.eigen_coeffs.transpose();
        prop_assert!((scores - &model.scores).abs().max() < 1e-8);
        let total: f64 = (0..8).map(|i| {
            let r = centered.row(i).transpose();
            (r.transpose() * w * &r)[(0, 0)]
        }).sum::<f64>() / 7.0;
        prop_assert!((model.eigenvalues.sum() - total).abs() < 1e-8 * total.max(1.0));
    }

    #[test]
    fn kmeans_trace_and_best_of(x in matrix(20, 2), m in 2usize..5, seed in any::<u64>()) {
        let fit = kmeans_detailed(&x, m, &KMeansOptions { restarts: 6, seed, ..Default::default() }).unwrap();
        prop_assert!(fit.trace.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].max(1.0)));
        prop_assert!(fit.run_wcss.iter().all(|&r| fit.partition.wcss <= r));
        prop_assert_eq!(fit.partition.wcss, fit.run_wcss[fit.best_run]);
    }

    #[test]
    fn relabeling_leaves_indices_unchanged(x in matrix(15, 2), lab in labels(15, 3), perm in Just(vec![0usize, 1, 2]).prop_shuffle()) {
        prop_assume!((0..3).all(|k| lab.contains(&k)));
        let moved = relabel(&lab, &perm);
        let a = Partition::from_labels(&x, lab.clone(), 3).unwrap();
        let b = Partition::from_labels(&x, moved.clone(), 3).unwrap();
        prop_assert!((a.wcss - b.wcss).abs() <= 1e-10 * a.wcss.max(1.0));
        let d = euclidean_distances(&x);
        prop_assert_eq!(silhouette(&d, &lab).unwrap().0, silhouette(&d, &moved).unwrap().0);
        prop_assert_eq!(dunn(&d, &lab).unwrap(), dunn(&d, &moved).unwrap());
    }

    #[test]
    fn gmm_criteria_recompute(x in matrix(30, 2), m in 1usize..4, seed in 0u64..1000) {
        let opts = GmmOptions { seed, restarts: 2, ..Default::default() };
        let Ok(fit) = gmm_em(&x, m, CovarianceModel::Diagonal, &opts) else { return Ok(()) };
        let (ll, p, n) = (fit.loglik, fit.criteria.n_params as f64, 30f64);
        let ent: f64 = fit.posteriors.iter().filter(|&&t| t > 0.0).map(|&t| -t * t.ln()).sum();
        let bic = -2.0 * ll + p * n.ln();
        prop_assert!((fit.criteria.bic - bic).abs() <= 1e-10 * bic.abs().max(1.0));
        prop_assert!((fit.criteria.aic - (-2.0 * ll + 2.0 * p)).abs() <= 1e-10 * bic.abs().max(1.0));
        prop_assert!((fit.criteria.icl - (bic + 2.0 * ent)).abs() <= 1e-10 * bic.abs().max(1.0));
        for row in fit.posteriors.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn complete_linkage_heights_never_drop(x in matrix(18, 3)) {
        let h = agglomerate(&x, Linkage::Complete).unwrap().heights();
        prop_assert!(h.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn functional_kmeans_is_kmeans_in_metric_coordinates(c in matrix(16, 5), l in 0usize..2, seed in 0u64..100) {
        let set = coeff_set(c);
        let part = functional_kmeans(&set, 3, l, 4, seed).unwrap();
        let w = set.basis.derivative_gram(l).unwrap();
        let coords = &set.coefficients * common::sqrtm(w);
        let flat = Partition::from_labels(&coords, part.labels.clone(), 3).unwrap();
        prop_assert!((flat.wcss - part.wcss).abs() <= 1e-8 * part.wcss.max(1.0));
    }

    #[test]
    fn functional_kmeans_ignores_a_common_curve(c in matrix(16, 5), shift in prop::collection::vec(-50.0..50.0f64, 5), seed in 0u64..100) {
        let set = coeff_set(c.clone());
        let s = DVector::from_vec(shift);
        let moved = coeff_set(DMatrix::from_fn(16, 5, |i, j| c[(i, j)] + s[j]));
        let a = functional_kmeans(&set, 3, 0, 4, seed).unwrap();
        let b = functional_kmeans(&moved, 3, 0, 4, seed).unwrap();
        prop_assert!((a.wcss - b.wcss).abs() <= 1e-8 * a.wcss.max(1.0));
    }

    #[test]
    fn ari_symmetry_and_relabeling(a in labels(25, 4), b in labels(25, 3), perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let ab = adjusted_rand_index(&a, &b).unwrap();
        prop_assert_eq!(ab, adjusted_rand_index(&b, &a).unwrap());
        prop_assert!((adjusted_rand_index(&relabel(&a, &perm), &b).unwrap() - ab).abs() < 1e-12);
        prop_assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        prop_assert!((ab - common::ari_by_pairs(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn haar_round_trip_and_energy(x in prop::collection::vec(-1e3..1e3f64, 1..=6).prop_flat_map(|v| {
        let n = 1usize << v.len();
        prop::collection::vec(-1e3..1e3f64, n)
    })) {
        let c = haar_dwt(&x).unwrap();
        let back = haar_idwt(&c).unwrap();
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ec: f64 = c.to_vec().iter().map(|v| v * v).sum();
        prop_assert!((ex - ec).abs() <= 1e-12 * ex.max(1.0));
    }
}
