use std::fs;

use proptest::prelude::*;

use lomia::data::{
    feature_extrema, generate_sbm, load_bundle, sample_split, save_bundle, FeatureEncoding, SamplingMethod, SbmConfig,
    SplitSizes,
};
use lomia::graph::Graph;
use lomia::nn::Matrix;
use lomia::Error;

mod common;
use common::{logistic_probe_accuracy, sbm};

fn triangle() -> Graph {
    let features = Matrix::from_vec(3, 2, vec![0.0, 1.0, 0.5, 0.25, 1.0, 0.0]).unwrap();
    Graph::new(features, vec![0, 1, 1], 2, &[(0, 1), (1, 2), (2, 0)]).unwrap()
}

#[test]
fn triangle_round_trips_in_both_encodings() {
    for enc in [FeatureEncoding::BinaryF32, FeatureEncoding::Csv] {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&triangle(), dir.path(), enc).unwrap();
        assert_eq!(load_bundle(dir.path()).unwrap(), triangle());
    }
}

#[test]
fn csv_preserves_full_precision() {
    let features = Matrix::from_vec(2, 1, vec![0.1, 1.0 / 3.0]).unwrap();
    let g = Graph::new(features, vec![0, 1], 2, &[(0, 1)]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(save_bundle(&g, dir.path(), FeatureEncoding::BinaryF32).is_err());
    save_bundle(&g, dir.path(), FeatureEncoding::Csv).unwrap();
    assert_eq!(load_bundle(dir.path()).unwrap(), g);
}

fn write_bundle(dir: &std::path::Path, n: usize, edges: &str, labels: &str, blob: &[u8]) {
    let manifest =
        format!(r#"{{"version":1,"num_nodes":{n},"num_classes":2,"feature_dim":1,"feature_encoding":"binary_f32"}}"#);
    fs::write(dir.join("manifest.json"), manifest).unwrap();
    fs::write(dir.join("edges.tsv"), edges).unwrap();
    fs::write(dir.join("labels.tsv"), labels).unwrap();
    fs::write(dir.join("features.bin"), blob).unwrap();
}

#[test]
fn reverse_duplicate_edge_collapses() {
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), 2, "0\t1\n1\t0\n", "0\n1\n", &[0u8; 8]);
    let g = load_bundle(dir.path()).unwrap();
    assert_eq!(g.num_edges(), 1);
    assert_eq!(g.edges(), vec![(0, 1)]);
}

#[test]
fn short_blob_reports_byte_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), 3, "0\t1\n", "0\n1\n0\n", &[0u8; 8]);
    match load_bundle(dir.path()).unwrap_err() {
        Error::Format { path, message, .. } => {
            assert!(path.ends_with("features.bin"));
            assert!(message.contains("12") && message.contains('8'), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn out_of_range_entries_name_file_and_row() {
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), 2, "0\t1\n1\t5\n", "0\n1\n", &[0u8; 8]);
    match load_bundle(dir.path()).unwrap_err() {
        Error::Format { path, row, .. } => {
            assert!(path.ends_with("edges.tsv"));
            assert_eq!(row, Some(2));
        }
        other => panic!("unexpected {other:?}"),
    }

    write_bundle(dir.path(), 2, "0\t1\n", "0\n2\n", &[0u8; 8]);
    match load_bundle(dir.path()).unwrap_err() {
        Error::Format { path, row, .. } => {
            assert!(path.ends_with("labels.tsv"));
            assert_eq!(row, Some(2));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_bundle_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_bundle(&dir.path().join("absent")), Err(Error::Io { .. })));
}

#[test]
fn equal_block_probabilities_give_chance_homophily() {
    // Round-robin classes: the same-class share of all pairs is (n/C - 1)/(n - 1).
    let (n, c) = (400, 4);
    let expected = (n / c - 1) as f64 / (n - 1) as f64;
    let mut same = 0usize;
    let mut total = 0usize;
    for seed in 0..10 {
        let g = sbm(n, c, 0.05, 0.05, 2, 1.0, seed);
        for (u, v) in g.edges() {
            total += 1;
            same += usize::from(g.label(u) == g.label(v));
        }
    }
    let ratio = same as f64 / total as f64;
    assert!((ratio - expected).abs() < 0.02, "ratio {ratio}, expected {expected}");
}

#[test]
fn mean_degree_matches_binomial_expectation() {
    let (n, c, intra, inter) = (1000usize, 4usize, 0.05, 0.005);
    let per_class = n / c;
    let expected = (per_class - 1) as f64 * intra + (n - per_class) as f64 * inter;
    let g = sbm(n, c, intra, inter, 2, 1.0, 3);
    let mean = 2.0 * g.num_edges() as f64 / n as f64;
    assert!(
        (mean - expected).abs() <= 0.2 * expected,
        "mean degree {mean}, expected {expected}"
    );
}

#[test]
fn zero_signal_features_carry_no_class_information() {
    let g = sbm(1000, 4, 0.01, 0.001, 32, 0.0, 5);
    let train: Vec<usize> = (0..1000).filter(|v| v % 8 < 4).collect();
    let test: Vec<usize> = (0..1000).filter(|v| v % 8 >= 4).collect();
    let acc = logistic_probe_accuracy(&g, &train, &test);
    assert!((acc - 0.25).abs() < 0.07, "probe accuracy {acc}");

    let informative = sbm(1000, 4, 0.01, 0.001, 32, 1.5, 5);
    assert!(logistic_probe_accuracy(&informative, &train, &test) > 0.6);
}

#[test]
fn sbm_feature_extrema_within_unit_interval() {
    let (lo, hi) = feature_extrema(&sbm(200, 2, 0.05, 0.01, 16, 3.0, 1));
    assert!(lo >= 0.0 && hi <= 1.0 && lo < hi);
}

/// 2,995 nodes over seven classes, the smallest holding 192.
fn cora_shaped() -> Graph {
    let counts = [192usize, 400, 450, 500, 480, 473, 500];
    let labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    assert_eq!(labels.len(), 2995);
    Graph::new(Matrix::zeros(2995, 1), labels, 7, &[]).unwrap()
}

#[test]
fn cora_shaped_balanced_split() {
    let g = cora_shaped();
    let split = sample_split(&g, SamplingMethod::Balanced, SplitSizes::default(), 0).unwrap();
    assert_eq!(split.sizes(), [336; 4]);
    for h in split.class_histograms(&g) {
        assert_eq!(h, vec![48; 7]);
    }
}

#[test]
fn cora_shaped_random_split() {
    let g = cora_shaped();
    let split = sample_split(&g, SamplingMethod::Random, SplitSizes::default(), 0).unwrap();
    let mut sizes = split.sizes();
    sizes.sort_unstable();
    assert_eq!(sizes, [748, 749, 749, 749]);
    split.validate(&g).unwrap();
}

#[test]
fn tiny_balanced_split() {
    let g = Graph::new(Matrix::zeros(8, 1), vec![0, 1, 0, 1, 0, 1, 0, 1], 2, &[]).unwrap();
    let split = sample_split(&g, SamplingMethod::Balanced, SplitSizes::default(), 9).unwrap();
    assert_eq!(split.sizes(), [2; 4]);
    for h in split.class_histograms(&g) {
        assert_eq!(h, vec![1, 1]);
    }
}

#[test]
fn infeasible_sizes_name_the_limiting_class() {
    let labels: Vec<usize> = (0..40).map(|i| if i < 6 { 2 } else { i % 2 }).collect();
    let g = Graph::new(Matrix::zeros(40, 1), labels, 3, &[]).unwrap();
    let sizes = SplitSizes {
        per_class: Some(2),
        set_size: None,
    };
    let err = sample_split(&g, SamplingMethod::Balanced, sizes, 0)
        .unwrap_err()
        .to_string();
    assert!(err.contains("class 2"), "{err}");
    let sizes = SplitSizes {
        per_class: Some(4),
        set_size: None,
    };
    let err = sample_split(&g, SamplingMethod::PartiallyBalanced, sizes, 0)
        .unwrap_err()
        .to_string();
    assert!(err.contains("class 2"), "{err}");
}

#[test]
fn partially_balanced_defaults() {
    let g = cora_shaped();
    let split = sample_split(&g, SamplingMethod::PartiallyBalanced, SplitSizes::default(), 4).unwrap();
    let [tt, te, st, se] = split.class_histograms(&g);
    assert_eq!(tt, st);
    assert!(tt.iter().all(|&k| k == tt[0]));
    let m = tt[0];
    assert_eq!(m, (192.0f64 * 0.45).floor() as usize);
    assert_eq!(te.iter().sum::<usize>(), 7 * m);
    assert_eq!(se.iter().sum::<usize>(), 7 * m);
    split.validate(&g).unwrap();
}

fn arb_labeled_graph() -> impl Strategy<Value = Graph> {
    (2usize..5, 8usize..60).prop_flat_map(|(c, extra)| {
        // At least four nodes per class so every method is feasible.
        let n = 4 * c + extra;
        prop::collection::vec(0..c, extra).prop_map(move |tail| {
            let labels: Vec<usize> = (0..4 * c).map(|i| i % c).chain(tail).collect();
            Graph::new(Matrix::zeros(n, 1), labels, c, &[]).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn splits_are_disjoint(g in arb_labeled_graph(), seed in any::<u64>()) {
        for method in SamplingMethod::ALL {
            let split = sample_split(&g, method, SplitSizes::default(), seed).unwrap();
            prop_assert!(split.validate(&g).is_ok());
            prop_assert_eq!(&split, &sample_split(&g, method, SplitSizes::default(), seed).unwrap());
        }
    }

    #[test]
    fn balanced_histograms_match(g in arb_labeled_graph(), seed in any::<u64>()) {
        let split = sample_split(&g, SamplingMethod::Balanced, SplitSizes::default(), seed).unwrap();
        let h = split.class_histograms(&g);
        prop_assert!(h.iter().all(|x| x == &h[0]));
    }

    #[test]
    fn random_sets_are_near_equal(g in arb_labeled_graph(), seed in any::<u64>()) {
        let split = sample_split(&g, SamplingMethod::Random, SplitSizes::default(), seed).unwrap();
        let n = g.num_nodes();
        prop_assert_eq!(split.sizes().iter().sum::<usize>(), n);
        for s in split.sizes() {
            prop_assert!(s == n / 4 || s == n / 4 + 1);
        }
    }

    #[test]
    fn partially_balanced_trains_match(g in arb_labeled_graph(), seed in any::<u64>()) {
        let split = sample_split(&g, SamplingMethod::PartiallyBalanced, SplitSizes::default(), seed).unwrap();
        let h = split.class_histograms(&g);
        prop_assert_eq!(&h[0], &h[2]);
        prop_assert_eq!(split.target_test.len(), split.target_train.len());
    }

    #[test]
    fn sbm_is_seed_deterministic(seed in any::<u64>(), n in 2usize..80) {
        let cfg = SbmConfig { num_nodes: n, num_classes: 2, feature_dim: 3, intra_edge_prob: 0.2, inter_edge_prob: 0.05, ..SbmConfig::default() };
        let cfg = SbmConfig { seed, ..cfg };
        prop_assert_eq!(generate_sbm(&cfg).unwrap(), generate_sbm(&cfg).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn binary_bundles_round_trip_bitwise(seed in any::<u64>(), n in 1usize..40, d in 1usize..6) {
        let g = generate_sbm(&SbmConfig { num_nodes: n, num_classes: 3, feature_dim: d, intra_edge_prob: 0.3, inter_edge_prob: 0.1, feature_signal: 1.0, seed }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&g, dir.path(), FeatureEncoding::BinaryF32).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        let bits = |g: &Graph| g.features().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&g));
        prop_assert_eq!(back, g);
    }
}
