mod common;

use std::collections::HashSet;
use std::sync::Mutex;

use lomia::attack::*;
use lomia::eval::compute_metrics;
use lomia::gnn::{preset_config, GnnModel, GnnType, Overfitting, TemperatureScaled};
use lomia::graph::{Graph, LabelOracle, ModelLabelOracle, SubgraphQuery};
use lomia::nn::Matrix;
use lomia::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Answers by a fixed rule and keeps every payload it was sent.
struct Recorder {
    classes: usize,
    log: Mutex<Vec<SubgraphQuery>>,
}

impl Recorder {
    fn new(classes: usize) -> Self {
        Self {
            classes,
            log: Mutex::new(Vec::new()),
        }
    }

    fn answer(&self, q: &SubgraphQuery) -> Vec<usize> {
        let e = q.edges().len();
        (0..q.node_count()).map(|k| (k + e) % self.classes).collect()
    }
}

impl LabelOracle for Recorder {
    fn query(&self, query: &SubgraphQuery) -> lomia::Result<Vec<usize>> {
        self.log.lock().unwrap().push(query.clone());
        Ok(self.answer(query))
    }

    fn queries_issued(&self) -> u64 {
        self.log.lock().unwrap().len() as u64
    }
}

struct Constant(usize);

impl LabelOracle for Constant {
    fn query(&self, q: &SubgraphQuery) -> lomia::Result<Vec<usize>> {
        Ok(vec![self.0; q.node_count()])
    }

    fn queries_issued(&self) -> u64 {
        0
    }
}

fn graph_with(features: Vec<f64>, dim: usize, labels: Vec<usize>, c: usize, edges: &[(usize, usize)]) -> Graph {
    let n = labels.len();
    Graph::new(Matrix::from_vec(n, dim, features).unwrap(), labels, c, edges).unwrap()
}

fn interior_graph(seed: u64) -> Graph {
    let mut rng = rng_from_seed(seed);
    let feats: Vec<f64> = (0..5 * 10).map(|_| rng.random_range(0.2..0.8)).collect();
    graph_with(feats, 10, vec![1, 0, 1, 2, 0], 3, &[(0, 1), (0, 2), (0, 3), (1, 2)])
}

fn params(rates: Vec<f64>, extrema: (f64, f64)) -> ExtractionParams {
    ExtractionParams {
        rate_set: RateSet::new(rates).unwrap(),
        extrema,
    }
}

#[test]
fn replay_of_recorded_queries_reproduces_features() {
    let g = interior_graph(5);
    let p = params(vec![0.3, 1.0], (0.0, 1.0));
    let oracle = Recorder::new(3);
    let truths = [0, 1, 2];
    let fv = extract_attack_features(&oracle, &g, 0, 1, &truths, &p, 77).unwrap();
    let log = oracle.log.into_inner().unwrap();
    let n = 3;
    assert_eq!(log.len(), 2 * 2 * (2 + n));
    assert_eq!((fv.n_num, fv.w_i_node, fv.o_label), (3, false, 1));

    let original = g.feature_row(0);
    let neighbor_rows: Vec<Vec<f64>> = [1, 2, 3].iter().map(|&u| g.feature_row(u).to_vec()).collect();
    let acc = |pred: &[usize]| pred.iter().zip(&truths).filter(|(a, b)| a == b).count() as f64 / 3.0;
    let rule = |q: &SubgraphQuery| -> Vec<usize> { (0..q.node_count()).map(|k| (k + q.edges().len()) % 3).collect() };

    for (b, chunk) in log.chunks(2 + n).enumerate() {
        let (rate, fill) = ([0.3, 1.0][b / 2], [1.0, 0.0][b % 2]);
        let iso = &chunk[0];
        assert_eq!(iso.node_count(), 1);
        let masked: Vec<usize> = (0..10).filter(|&i| iso.center_features()[i] != original[i]).collect();
        assert_eq!(masked.len(), (rate * 10.0_f64).round() as usize);
        assert!(masked.iter().all(|&i| iso.center_features()[i] == fill));

        assert_eq!(chunk[1].center_features(), iso.center_features());
        assert_eq!(chunk[1].neighbor_features(), neighbor_rows.as_slice());
        assert_eq!(chunk[1].edges(), &[(0, 1), (0, 2), (0, 3)]);
        let mut dropped = HashSet::new();
        for w in chunk[1..].windows(2) {
            let before: HashSet<_> = w[0].edges().iter().copied().collect();
            let after: HashSet<_> = w[1].edges().iter().copied().collect();
            assert!(after.is_subset(&before));
            let gone: Vec<_> = before.difference(&after).collect();
            assert_eq!(gone.len(), 1);
            assert!(dropped.insert(*gone[0]));
            assert_eq!(w[1].center_features(), iso.center_features());
        }
        assert!(chunk[n + 1].edges().is_empty());

        let zero = rule(iso);
        let all = rule(&chunk[1]);
        let steps: Vec<Vec<usize>> = chunk[2..].iter().map(rule).collect();
        let want = MaskBlock {
            i_none: f64::from(u8::from(zero[0] == 1)),
            i_all: f64::from(u8::from(all[0] == 1)),
            i_step: steps.iter().filter(|s| s[0] == 1).count() as f64 / 3.0,
            n_acc_all: acc(&all[1..]),
            n_acc_none: acc(&steps[2][1..]),
            n_acc_avg: steps.iter().map(|s| acc(&s[1..])).sum::<f64>() / 3.0,
            change_p: masked.len() as f64 / 10.0,
        };
        let got = fv.blocks[b];
        assert_eq!(got.i_none, want.i_none);
        assert_eq!(got.i_all, want.i_all);
        assert!((got.i_step - want.i_step).abs() < 1e-15);
        assert!((got.n_acc_all - want.n_acc_all).abs() < 1e-15);
        assert!((got.n_acc_none - want.n_acc_none).abs() < 1e-15);
        assert!((got.n_acc_avg - want.n_acc_avg).abs() < 1e-15);
        assert!((got.change_p - want.change_p).abs() < 1e-15);
    }
}

#[test]
fn isolated_node_rule() {
    let g = interior_graph(6);
    let p = params(vec![0.5, 1.0], (0.0, 1.0));
    let oracle = Recorder::new(3);
    let fv = extract_attack_features(&oracle, &g, 4, 0, &[], &p, 1).unwrap();
    assert_eq!(oracle.queries_issued(), 2 * 2 * 2);
    assert!(fv.w_i_node);
    assert_eq!(fv.n_num, 0);
    for b in &fv.blocks {
        assert_eq!(b.i_step, b.i_all);
        assert_eq!((b.n_acc_all, b.n_acc_none, b.n_acc_avg), (0.0, 0.0, 0.0));
    }
}

#[test]
fn binary_features_full_mask_change_fraction() {
    let row = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0];
    let zeros = row.iter().filter(|&&v| v == 0.0).count() as f64 / 8.0;
    let mut feats = row.to_vec();
    feats.extend([0.0; 8]);
    let g = graph_with(feats, 8, vec![0, 1], 2, &[(0, 1)]);
    let p = params(vec![1.0], (0.0, 1.0));
    let fv = extract_attack_features(&Constant(0), &g, 0, 0, &[1], &p, 3).unwrap();
    assert_eq!(fv.blocks[0].change_p, zeros);
    assert_eq!(fv.blocks[1].change_p, 1.0 - zeros);
}

#[test]
fn constant_correct_oracle_gives_all_ones() {
    let g = graph_with(vec![0.5; 4 * 3], 3, vec![2; 4], 3, &[(0, 1), (0, 2), (0, 3)]);
    let p = params(vec![0.2, 0.6, 1.0], (0.0, 1.0));
    let fv = extract_attack_features(&Constant(2), &g, 0, 2, &[2, 2, 2], &p, 9).unwrap();
    for b in &fv.blocks {
        assert_eq!(
            (b.i_none, b.i_all, b.i_step, b.n_acc_all, b.n_acc_none, b.n_acc_avg),
            (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
        );
    }
}

#[test]
fn schema_matches_vector_length() {
    for rates in [vec![1.0], vec![0.2, 0.4, 0.6, 0.8, 1.0], vec![0.05, 0.5]] {
        let rs = RateSet::new(rates.clone()).unwrap();
        let schema = feature_schema(&rs);
        assert_eq!(schema.len(), 3 + 14 * rates.len());
        let unique: HashSet<_> = schema.iter().collect();
        assert_eq!(unique.len(), schema.len());
        let g = interior_graph(1);
        let p = ExtractionParams {
            rate_set: rs,
            extrema: (0.0, 1.0),
        };
        let fv = extract_attack_features(&Constant(0), &g, 0, 1, &[0, 1, 2], &p, 0).unwrap();
        assert_eq!(fv.to_vec().len(), schema.len());
    }
    let schema = feature_schema(&RateSet::default());
    assert_eq!(&schema[..3], &["n_num", "w_i_node", "o_label"]);
    assert_eq!(schema[3], "i_none_max_0.2");
    assert_eq!(schema[10], "i_none_min_0.2");
    assert_eq!(schema[72], "change_p_min_1.0");
}

#[test]
fn rate_set_validation() {
    assert!(RateSet::new(vec![]).is_err());
    assert!(RateSet::new(vec![0.0]).is_err());
    assert!(RateSet::new(vec![1.5]).is_err());
    assert!(RateSet::new(vec![0.4, 0.2]).is_err());
    assert!(RateSet::new(vec![0.2, 0.2]).is_err());
}

#[test]
fn mismatched_neighbor_truths() {
    let g = interior_graph(2);
    let p = params(vec![1.0], (0.0, 1.0));
    assert!(extract_attack_features(&Constant(0), &g, 0, 1, &[0, 1], &p, 0).is_err());
    assert!(extract_attack_features(&Constant(0), &g, 9, 1, &[], &p, 0).is_err());
}

fn untrained_model(dim: usize, classes: usize, seed: u64) -> GnnModel {
    let mut cfg = preset_config(Overfitting::High, GnnType::Gcn);
    cfg.seed = seed;
    GnnModel::new(&cfg, dim, classes).unwrap()
}

#[test]
fn temperature_does_not_change_features() {
    let g = common::sbm(40, 3, 0.2, 0.05, 12, 0.5, 4);
    let model = untrained_model(12, 3, 8);
    let p = params(vec![0.3, 1.0], (0.0, 1.0));
    let members: Vec<usize> = (0..20).collect();
    let nonmembers: Vec<usize> = (20..40).collect();
    let runs: Vec<AttackDataset> = [0.1, 1.0, 10.0]
        .into_iter()
        .map(|t| {
            let oracle = ModelLabelOracle::new(TemperatureScaled {
                inner: &model,
                temperature: t,
            });
            build_attack_dataset(&oracle, &g, &members, &nonmembers, &p, 5).unwrap()
        })
        .collect();
    for r in &runs[1..] {
        for (a, b) in r.records.iter().zip(&runs[0].records) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.features), bits(&b.features));
        }
    }
}

#[test]
fn dataset_query_count_matches_degrees() {
    let g = common::sbm(30, 3, 0.2, 0.05, 6, 0.5, 2);
    let model = untrained_model(6, 3, 1);
    let oracle = ModelLabelOracle::new(&model);
    let p = params(vec![0.2, 0.5, 1.0], (0.0, 1.0));
    let members: Vec<usize> = (0..15).collect();
    let nonmembers: Vec<usize> = (15..30).collect();
    build_attack_dataset(&oracle, &g, &members, &nonmembers, &p, 0).unwrap();
    let expected: u64 = (0..30).map(|v| 2 * 3 * (2 + g.degree(v) as u64)).sum();
    assert_eq!(oracle.queries_issued(), expected);
}

#[test]
fn dataset_shapes_and_overlap() {
    let g = common::sbm(30, 3, 0.2, 0.05, 6, 0.5, 2);
    let p = params(vec![1.0], (0.0, 1.0));
    let members: Vec<usize> = (0..10).collect();
    let d = build_attack_dataset(&Constant(0), &g, &members, &[], &p, 0).unwrap();
    assert_eq!(d.len(), 10);
    assert!(d.labels().iter().all(|&l| l == 1));
    let d = build_attack_dataset(&Constant(0), &g, &members, &(10..20).collect::<Vec<_>>(), &p, 0).unwrap();
    assert_eq!(d.len(), 20);
    assert_eq!(d.labels().iter().filter(|&&l| l == 1).count(), 10);
    assert!(matches!(
        build_attack_dataset(&Constant(0), &g, &[1, 2], &[2, 3], &p, 0),
        Err(lomia::Error::Argument(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn input_order_does_not_change_records(seed in 0u64..1000, shift in 1usize..20) {
        let g = common::sbm(24, 2, 0.2, 0.05, 5, 0.5, seed);
        let model = untrained_model(5, 2, seed);
        let oracle = ModelLabelOracle::new(&model);
        let p = params(vec![0.5, 1.0], (0.0, 1.0));
        let members: Vec<usize> = (0..12).collect();
        let nonmembers: Vec<usize> = (12..24).collect();
        let a = build_attack_dataset(&oracle, &g, &members, &nonmembers, &p, seed).unwrap();
        let mut m2 = members.clone();
        m2.rotate_left(shift % 12);
        let mut n2 = nonmembers.clone();
        n2.reverse();
        let b = build_attack_dataset(&oracle, &g, &m2, &n2, &p, seed).unwrap();
        let key = |d: &AttackDataset| {
            let mut v: Vec<(usize, u8, Vec<u64>)> = d
                .records
                .iter()
                .map(|r| (r.node, r.membership, r.features.iter().map(|x| x.to_bits()).collect()))
                .collect();
            v.sort();
            v
        };
        prop_assert_eq!(key(&a), key(&b));
    }
}

fn synthetic(n: usize, separable: bool, seed: u64) -> AttackDataset {
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let records = (0..n)
        .map(|i| {
            let membership = (i % 2) as u8;
            let sign = if membership == 1 { 1.0 } else { -1.0 };
            let x0 = if separable {
                sign * rng.random_range(1.0..2.0)
            } else {
                noise.sample(&mut rng)
            };
            let features = vec![x0, noise.sample(&mut rng), noise.sample(&mut rng)];
            AttackRecord {
                node: i,
                membership,
                features,
            }
        })
        .collect();
    AttackDataset::new(vec!["a".into(), "b".into(), "c".into()], records).unwrap()
}

fn small_mlp(seed: u64) -> AttackMlpConfig {
    AttackMlpConfig {
        epochs: 40,
        seed,
        ..AttackMlpConfig::default()
    }
}

#[test]
fn separable_data_is_learned() {
    let (train, holdout) = synthetic(400, true, 1).stratified_split(0.25, 2).unwrap();
    let att = train_attack_model(&train, &holdout, &small_mlp(3), SelectionStrategy::TestAcc, None).unwrap();
    let scores = att.model.scores(&holdout).unwrap();
    let m = compute_metrics(&scores, &holdout.labels(), 0.5, 0.1).unwrap();
    assert!(m.values.accuracy >= 0.99, "{}", m.values.accuracy);
    assert!(!att.oracle_only);
    assert_eq!(att.trace.len(), 40);
}

#[test]
fn null_labels_stay_near_chance() {
    let mut accs = Vec::new();
    for seed in 0..10 {
        let (train, holdout) = synthetic(300, false, seed).stratified_split(0.2, seed).unwrap();
        let fresh = synthetic(400, false, 1000 + seed);
        let att = train_attack_model(&train, &holdout, &small_mlp(seed), SelectionStrategy::TestAcc, None).unwrap();
        let scores = att.model.scores(&fresh).unwrap();
        accs.push(
            compute_metrics(&scores, &fresh.labels(), 0.5, 0.1)
                .unwrap()
                .values
                .accuracy,
        );
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.07, "{mean}");
}

#[test]
fn selection_picks_best_epoch() {
    let (train, holdout) = synthetic(200, false, 4).stratified_split(0.3, 4).unwrap();
    let eval = synthetic(100, false, 5);
    for sel in SelectionStrategy::ALL {
        let att = train_attack_model(&train, &holdout, &small_mlp(1), sel, Some(&eval)).unwrap();
        let key = |m: &EpochMetrics| match sel {
            SelectionStrategy::TrainAcc => -m.train_acc,
            SelectionStrategy::TestAcc => -m.test_acc,
            SelectionStrategy::TrainLoss => m.train_loss,
            SelectionStrategy::TestLoss => m.test_loss,
            SelectionStrategy::EvaluateAcc => -m.evaluate_acc.unwrap(),
        };
        let best = att.trace.iter().map(key).fold(f64::INFINITY, f64::min);
        let first = att.trace.iter().position(|m| key(m) == best).unwrap() + 1;
        assert_eq!(att.selected_epoch, first, "{sel}");
        assert_eq!(att.oracle_only, sel == SelectionStrategy::EvaluateAcc);
    }
}

#[test]
fn attack_training_errors() {
    let data = synthetic(40, true, 0);
    let (train, holdout) = data.stratified_split(0.25, 0).unwrap();
    let empty = AttackDataset::new(train.columns.clone(), vec![]).unwrap();
    let cfg = small_mlp(0);
    assert!(train_attack_model(&train, &holdout, &cfg, SelectionStrategy::EvaluateAcc, None).is_err());
    assert!(train_attack_model(&train, &empty, &cfg, SelectionStrategy::TestAcc, None).is_err());
    assert!(train_attack_model(&train, &empty, &cfg, SelectionStrategy::TrainLoss, None).is_ok());
    let one_class = AttackDataset::new(
        train.columns.clone(),
        train.records.iter().filter(|r| r.membership == 1).cloned().collect(),
    )
    .unwrap();
    assert!(train_attack_model(&one_class, &holdout, &cfg, SelectionStrategy::TrainAcc, None).is_err());
}

#[test]
fn standardizer_handles_constant_columns() {
    let rows: Vec<&[f64]> = vec![&[1.0, 5.0], &[3.0, 5.0]];
    let s = Standardizer::fit(&rows);
    let x = s.transform(&rows);
    assert_eq!(x.row(0), &[-1.0, 5.0]);
    assert_eq!(x.row(1), &[1.0, 5.0]);
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("att.csv");
    let mut data = synthetic(20, false, 3);
    data.records[0].features[1] = 0.1 + 0.2;
    data.write_csv(&path, FEATURE_SCHEMA_VERSION).unwrap();
    let (back, schema) = AttackDataset::read_csv(&path).unwrap();
    assert_eq!(schema, FEATURE_SCHEMA_VERSION);
    assert_eq!(back, data);

    std::fs::write(&path, "# schema: x\nnode,membership,a\n0,1,0.5\n1,2,0.5\n").unwrap();
    match AttackDataset::read_csv(&path) {
        Err(lomia::Error::Format { row, .. }) => assert_eq!(row, Some(4)),
        other => panic!("{other:?}"),
    }
}

struct Uniform(Vec<f64>);

impl lomia::graph::LogitModel for Uniform {
    fn num_classes(&self) -> usize {
        self.0.len()
    }

    fn logits(&self, features: &Matrix, _: &[Vec<usize>]) -> lomia::Result<Matrix> {
        let data = (0..features.rows()).flat_map(|_| self.0.clone()).collect();
        Matrix::from_vec(features.rows(), self.0.len(), data)
    }
}

#[test]
fn baseline_columns_and_values() {
    let g = interior_graph(3);
    let oracle = lomia::graph::ModelPosteriorOracle::new(Uniform(vec![0.0, (2.0f64).ln(), 0.0]));
    // softmax of (0, ln 2, 0) is (0.25, 0.5, 0.25).
    let top = baseline_features(&oracle, &g, 0, BaselineVariant::Hop0).unwrap();
    assert!((top[0] - 0.5).abs() < 1e-12 && (top[1] - 0.25).abs() < 1e-12);
    let comb = baseline_features(&oracle, &g, 0, BaselineVariant::Combined).unwrap();
    assert_eq!(comb.len(), 4);
    let all = baseline_dataset(&oracle, &g, &[0, 1], &[2], BaselineVariant::AllProb).unwrap();
    assert_eq!(all.columns, vec!["prob_0", "prob_1", "prob_2"]);
    assert_eq!(all.len(), 3);
    for v in BaselineVariant::ALL {
        let d = baseline_dataset(&oracle, &g, &[0, 4], &[1], v).unwrap();
        assert_eq!(d.columns, v.columns(3));
        assert_eq!(v.name().parse::<BaselineVariant>().unwrap(), v);
    }
}
