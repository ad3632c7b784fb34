mod common;

use std::collections::BTreeSet;
use std::path::Path;

use fdclust::basis::LambdaChoice;
use fdclust::curves::{generate_synthetic, SyntheticConfig};
use fdclust::mvclust::Partition;
use fdclust::pipeline::{
    adjusted_rand_index, emit_plots, paper_methods, read_assignments, run_method, run_pipeline, Clusterer, InputSource,
    MethodKind, MethodSpec, MethodStatus, PipelineConfig,
};
use fdclust::FdError;

fn three_templates(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        seed,
        ..SyntheticConfig::default()
    }
}

fn bspline_kmeans() -> MethodSpec {
    MethodSpec::new(MethodKind::FilteringBspline {
        n_basis: 12,
        lambda: LambdaChoice::Fixed(0.0),
        clusterer: Clusterer::Kmeans { restarts: 20 },
    })
}

fn distance_based() -> MethodSpec {
    MethodSpec::new(MethodKind::DistanceBased {
        n_basis: 100,
        lambda: LambdaChoice::gcv_default(),
        l: 0,
        restarts: 20,
    })
}

fn file_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn two_methods_recover_three_templates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::new(
        InputSource::Synthetic(three_templates(3)),
        vec![bspline_kmeans(), distance_based()],
        dir.path(),
    );
    let rep = run_pipeline(&cfg).unwrap();
    for m in &rep.methods {
        assert_eq!(m.status, MethodStatus::Ok, "{:?}", m.error);
        assert_eq!(m.m, Some(3), "{}", m.name);
        assert!(m.ari_truth.unwrap() >= 0.95);
    }
    assert!(rep.ari.values[0][1] >= 0.95);
    for f in [
        "report.json",
        "raw.svg",
        "assignments_bspline_kmeans.csv",
        "centroids_bspline_kmeans.csv",
        "clusters_distance_based.svg",
        "centroids_distance_based.svg",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["methods"].as_array().unwrap().len(), 2);
    assert_eq!(json["methods"][0]["m"], 3);

    let ids: Vec<String> = generate_synthetic(&three_templates(3)).unwrap().curves.ids().to_vec();
    let back = read_assignments(dir.path().join("assignments_bspline_kmeans.csv"), &ids).unwrap();
    assert_eq!(Some(back), rep.methods[0].labels);
}

#[test]
fn selected_m_matches_isolated_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut fpca = MethodSpec::new(MethodKind::FilteringFpca {
        n_basis: 30,
        lambda: LambdaChoice::gcv_default(),
        variance: 0.99,
        clusterer: Clusterer::Hierarchical {
            linkage: fdclust::mvclust::Linkage::Ward,
        },
    });
    fpca.seed = Some(11);
    let mut cfg = PipelineConfig::new(
        InputSource::Synthetic(three_templates(5)),
        vec![bspline_kmeans(), fpca.clone()],
        dir.path(),
    );
    cfg.seed = 4;
    cfg.plots = false;
    let rep = run_pipeline(&cfg).unwrap();
    let cs = generate_synthetic(&three_templates(5)).unwrap().curves;
    let alone = run_method(&cs, &bspline_kmeans(), 4).unwrap();
    assert_eq!(rep.methods[0].m, Some(alone.m));
    let alone = run_method(&cs, &fpca, 11).unwrap();
    assert_eq!(rep.methods[1].m, Some(alone.m));
    assert!(!dir.path().join("raw.svg").exists());
}

#[test]
fn failed_method_does_not_abort_others() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = bspline_kmeans();
    bad.name = Some("too_many_basis".into());
    if let MethodKind::FilteringBspline { n_basis, .. } = &mut bad.kind {
        *n_basis = 400;
    }
    let cfg = PipelineConfig::new(
        InputSource::Synthetic(three_templates(1)),
        vec![bad, bspline_kmeans()],
        dir.path(),
    );
    let rep = run_pipeline(&cfg).unwrap();
    assert_eq!(rep.methods[0].status, MethodStatus::Failed);
    assert!(rep.methods[0].error.is_some());
    assert_eq!(rep.methods[1].status, MethodStatus::Ok);
    assert_eq!(rep.ari.methods, vec!["bspline_kmeans".to_string()]);
    assert_eq!(rep.ari.values, vec![vec![1.0]]);
}

#[test]
fn empty_method_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::new(InputSource::Synthetic(three_templates(1)), vec![], dir.path());
    assert!(matches!(run_pipeline(&cfg), Err(FdError::Config(_))));
}

#[test]
fn full_suite_runs_on_a_small_set() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SyntheticConfig {
        n_per_cluster: 8,
        ..three_templates(2)
    };
    let mut cfg = PipelineConfig::new(InputSource::Synthetic(synth), paper_methods(), dir.path());
    cfg.seed = 1;
    let rep = run_pipeline(&cfg).unwrap();
    assert_eq!(rep.methods.len(), 13);
    let names: BTreeSet<&str> = rep.methods.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names.len(), 13);
    for m in &rep.methods {
        assert!(m.seconds >= 0.0);
        if m.status == MethodStatus::Ok {
            assert!(m.m.unwrap() >= 1);
        }
    }
    let a = &rep.ari;
    for i in 0..a.values.len() {
        assert_eq!(a.values[i][i], 1.0);
        for j in 0..a.values.len() {
            assert_eq!(a.values[i][j], a.values[j][i]);
        }
    }
    print!("{}", rep.table());
}

#[test]
fn plots_are_deterministic_with_m_centroid_lines() {
    let data = generate_synthetic(&SyntheticConfig {
        n_per_cluster: 4,
        ..three_templates(9)
    })
    .unwrap();
    let part = Partition::from_labels(data.curves.values(), data.labels.clone(), 3).unwrap();
    let centroids = fdclust::pipeline::centroid_curves(&data.curves, &part).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let f1 = emit_plots(&data.curves, &part, &centroids, d1.path(), "demo").unwrap();
    let f2 = emit_plots(&data.curves, &part, &centroids, d2.path(), "demo").unwrap();
    assert_eq!(f1.len(), 3);
    for (a, b) in f1.iter().zip(&f2) {
        assert_eq!(file_bytes(a), file_bytes(b));
    }
    let cent = std::fs::read_to_string(&f1[2]).unwrap();
    assert_eq!(cent.matches("<polyline").count(), 3);
    let raw = std::fs::read_to_string(&f1[0]).unwrap();
    assert_eq!(raw.matches("<polyline").count(), 12);
}

#[test]
fn two_curves_two_colors() {
    let cs = fdclust::curves::CurveSet::new(
        vec![0.0, 1.0, 2.0],
        nalgebra::DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]),
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let part = Partition::from_labels(cs.values(), vec![0, 1], 2).unwrap();
    let d = tempfile::tempdir().unwrap();
    let files = emit_plots(&cs, &part, &part.centroids, d.path(), "pair").unwrap();
    let svg = std::fs::read_to_string(&files[1]).unwrap();
    let strokes: BTreeSet<&str> = svg
        .lines()
        .filter(|l| l.starts_with("<polyline"))
        .filter_map(|l| l.split("stroke=\"").nth(1))
        .map(|s| &s[..7])
        .collect();
    assert_eq!(strokes.len(), 2);
}

#[test]
fn ari_examples_match_pair_counting() {
    let cases: [(&[usize], &[usize], f64); 3] = [
        (&[0, 0, 1, 1], &[0, 0, 1, 1], 1.0),
        (&[0, 0, 0, 0], &[0, 1, 0, 2], 0.0),
        // 6 pairs: 0 joined in both, 2 + 2 joined in one only, 2 split in both
        (&[1, 1, 2, 2], &[1, 2, 1, 2], -0.5),
    ];
    for (a, b, want) in cases {
        let got = adjusted_rand_index(a, b).unwrap();
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        assert!((got - common::ari_by_pairs(a, b)).abs() < 1e-15);
    }
}

#[test]
fn ari_is_symmetric_and_bounded_on_random_labelings() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.random_range(3..40);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let ab = adjusted_rand_index(&a, &b).unwrap();
        assert_eq!(ab, adjusted_rand_index(&b, &a).unwrap());
        assert!((-0.5 - 1e-12..=1.0 + 1e-12).contains(&ab));
        let oracle = common::ari_by_pairs(&a, &b);
        if oracle.is_finite() {
            assert!((ab - oracle).abs() < 1e-12, "{ab} vs {oracle}");
        }
    }
}
