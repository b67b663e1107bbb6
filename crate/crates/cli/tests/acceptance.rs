//! Acceptance gate: one check per numbered criterion, each printing a single
//! PASS/FAIL/SKIP line. Criterion 8 runs only when `LOMIA_CORA_ML_BUNDLE`
//! points at a Cora_ML bundle directory.

use std::collections::HashSet;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use lomia::attack::{build_attack_dataset, extract_attack_features, ExtractionParams, RateSet};
use lomia::data::{feature_extrema, generate_sbm, sample_split, SamplingMethod, SbmConfig, SplitSizes};
use lomia::diagnostics::{gradient_suite, LAYER_KINDS};
use lomia::eval::{auc, compute_metrics};
use lomia::experiment::{
    run_experiment, train_on_split, DataSource, ExperimentConfig, ModelSpec, SamplingConfig, SideConfig,
};
use lomia::gnn::{preset_config, train_gnn, DefenseFlags, GnnType, Overfitting, TemperatureScaled};
use lomia::graph::{Graph, LabelOracle, ModelLabelOracle};
use lomia::nn::Matrix;
use lomia::rng::{derive_seed, rng_from_seed, stream};
use rand::Rng;

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

fn pass(ok: bool, detail: String) -> Outcome {
    Outcome { pass: Some(ok), detail }
}

/// Straight to the process stderr so the lines survive test output capture.
fn report(n: usize, o: &Outcome) {
    let tag = match o.pass {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "SKIP",
    };
    let line = format!("criterion {n}: {tag}: {}\n", o.detail);
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let checks = gradient_suite(100, 2024).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let worst = checks.iter().map(|c| c.max_relative_error).fold(0.0, f64::max);
    let complete = checks.len() == LAYER_KINDS.len() && checks.iter().all(|c| c.trials >= 100);
    pass(
        complete && worst < 1e-3 && secs < 60.0,
        format!(
            "{} layer kinds x 100 trials, worst relative error {worst:.2e}, {secs:.1}s",
            checks.len()
        ),
    )
}

fn pair_auc(s: &[f64], l: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] == 1 && l[j] == 0 {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

/// Scores, labels, threshold and the hand-counted `[tp, fp, tn, fn]`.
type Fixture = (&'static [f64], &'static [u8], f64, [usize; 4]);

const FIXTURES: [Fixture; 20] = [
    (
        &[0.58, 0.91, 0.21, 0.09, 0.42, 0.24],
        &[1, 0, 0, 0, 0, 1],
        0.5,
        [1, 1, 3, 1],
    ),
    (
        &[0.05, 0.86, 0.29, 0.14, 0.12, 0.31, 0.82, 0.18],
        &[1, 0, 0, 0, 0, 1, 0, 0],
        0.3,
        [1, 2, 4, 1],
    ),
    (
        &[0.78, 0.47, 0.92, 0.36, 0.25, 0.18, 0.78, 0.08],
        &[1, 0, 0, 0, 0, 0, 1, 1],
        0.7,
        [2, 1, 4, 1],
    ),
    (
        &[0.51, 0.16, 0.34, 0.93, 0.42, 0.96],
        &[1, 0, 1, 1, 0, 0],
        0.5,
        [2, 1, 2, 1],
    ),
    (&[0.58, 0.46, 0.84, 0.94], &[1, 0, 1, 1], 0.5, [3, 0, 1, 0]),
    (
        &[0.02, 0.29, 0.17, 0.12, 0.06, 0.29, 0.13],
        &[1, 0, 1, 1, 1, 1, 1],
        0.3,
        [0, 0, 1, 6],
    ),
    (&[0.45, 0.55, 0.88, 0.82, 0.86], &[1, 0, 1, 0, 0], 0.7, [1, 2, 1, 1]),
    (
        &[0.18, 0.23, 0.23, 0.48, 0.59, 0.26],
        &[1, 0, 1, 0, 0, 0],
        0.5,
        [0, 1, 3, 2],
    ),
    (&[0.95, 0.69, 0.52, 0.62], &[1, 0, 1, 1], 0.5, [3, 1, 0, 0]),
    (
        &[0.06, 0.07, 0.21, 0.16, 0.34, 0.05, 0.0, 0.15, 0.1],
        &[1, 0, 1, 1, 1, 1, 0, 1, 1],
        0.3,
        [1, 0, 2, 6],
    ),
    (
        &[0.96, 0.6, 0.47, 0.12, 0.49, 0.98],
        &[1, 0, 0, 1, 0, 1],
        0.7,
        [2, 0, 3, 1],
    ),
    (
        &[0.48, 0.69, 0.52, 0.21, 0.95, 0.36, 0.69],
        &[1, 0, 0, 0, 0, 1, 1],
        0.5,
        [1, 3, 1, 2],
    ),
    (&[0.91, 0.36, 0.22, 0.54], &[1, 0, 1, 1], 0.5, [2, 0, 1, 1]),
    (
        &[0.36, 0.03, 0.03, 0.28, 0.26, 0.69, 0.96, 0.45],
        &[1, 0, 0, 0, 1, 0, 0, 1],
        0.3,
        [2, 2, 3, 1],
    ),
    (
        &[0.2, 0.62, 0.9, 0.84, 0.48, 0.65, 0.8, 0.08, 0.66],
        &[1, 0, 0, 0, 0, 0, 1, 0, 1],
        0.7,
        [1, 2, 4, 2],
    ),
    (
        &[0.46, 0.74, 0.08, 0.16, 0.99, 0.03, 0.59],
        &[1, 0, 0, 1, 1, 0, 1],
        0.5,
        [2, 1, 2, 2],
    ),
    (
        &[0.8, 0.73, 0.1, 0.75, 0.14, 0.99, 0.19],
        &[1, 0, 1, 0, 0, 0, 0],
        0.5,
        [1, 3, 2, 1],
    ),
    (&[0.76, 0.33, 0.54, 0.83, 0.06], &[1, 0, 0, 1, 0], 0.3, [2, 2, 1, 0]),
    (
        &[0.78, 0.15, 0.14, 0.62, 0.12, 0.06, 0.68, 0.53, 0.48],
        &[1, 0, 1, 0, 0, 0, 1, 0, 0],
        0.7,
        [1, 0, 6, 2],
    ),
    (&[0.04, 0.1, 0.45, 0.03], &[1, 0, 0, 1], 0.5, [0, 0, 2, 2]),
];

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = rng_from_seed(seed);
        let n = rng.random_range(2..=200);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 20.0).round() / 20.0).collect();
        worst = worst.max((auc(&scores, &labels).unwrap() - pair_auc(&scores, &labels)).abs());
    }
    let mut exact = 0;
    for (scores, labels, t, [tp, fp, tn, fneg]) in FIXTURES {
        let m = compute_metrics(scores, labels, t, 0.1).unwrap().values;
        let n = (tp + fp + tn + fneg) as f64;
        let pre = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let rec = tp as f64 / (tp + fneg) as f64;
        let f1 = if pre + rec == 0.0 {
            0.0
        } else {
            2.0 * pre * rec / (pre + rec)
        };
        if m.accuracy == (tp + tn) as f64 / n && m.precision == pre && m.recall == rec && m.f1 == f1 {
            exact += 1;
        }
    }
    pass(
        worst <= 1e-12 && exact == FIXTURES.len(),
        format!("AUC vs pair oracle max |diff| {worst:.1e} over 100 instances; {exact}/20 confusion fixtures exact"),
    )
}

fn criterion_3() -> Outcome {
    let g = generate_sbm(&SbmConfig {
        num_nodes: 300,
        feature_dim: 32,
        ..SbmConfig::default()
    })
    .unwrap();
    let split = sample_split(&g, SamplingMethod::Random, SplitSizes::default(), 1).unwrap();
    let mut cfg = preset_config(Overfitting::High, GnnType::Gcn);
    cfg.epochs = 60;
    let train_graph = g.induced_subgraph(&split.target_train).unwrap().graph;
    let model = train_gnn(&cfg, &train_graph, &train_graph, &[0]).unwrap();
    let params = ExtractionParams {
        rate_set: RateSet::default(),
        extrema: feature_extrema(&g),
    };
    let nodes: Vec<usize> = (0..60).collect();
    let bits = |t: f64| -> Vec<Vec<u64>> {
        let oracle = ModelLabelOracle::new(TemperatureScaled {
            inner: &model,
            temperature: t,
        });
        let d = build_attack_dataset(&oracle, &g, &nodes[..30], &nodes[30..], &params, 9).unwrap();
        d.records
            .iter()
            .map(|r| r.features.iter().map(|x| x.to_bits()).collect())
            .collect()
    };
    let base = bits(1.0);
    let pure = bits(0.1) == base && bits(10.0) == base;
    let mut counts_ok = 0;
    for &v in &nodes {
        let oracle = ModelLabelOracle::new(&model);
        let truths: Vec<usize> = g.neighbors(v).iter().map(|&u| g.label(u)).collect();
        extract_attack_features(&oracle, &g, v, g.label(v), &truths, &params, v as u64).unwrap();
        let expected = 2 * params.rate_set.len() as u64 * (2 + g.degree(v) as u64);
        counts_ok += usize::from(oracle.queries_issued() == expected);
    }
    pass(
        pure && counts_ok == nodes.len(),
        format!(
            "features bitwise equal under temperatures 0.1/1/10: {pure}; query count exact on {counts_ok}/{} nodes",
            nodes.len()
        ),
    )
}

fn cora_shaped() -> Graph {
    let counts = [192usize, 400, 450, 500, 480, 473, 500];
    let labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    let n = labels.len();
    Graph::new(Matrix::zeros(n, 1), labels, 7, &[]).unwrap()
}

fn criterion_4() -> Outcome {
    let g = cora_shaped();
    let mut failures = Vec::new();
    for seed in 0..100u64 {
        for method in SamplingMethod::ALL {
            let s = sample_split(&g, method, SplitSizes::default(), seed).unwrap();
            let mut seen = HashSet::new();
            let total: usize = s.sizes().iter().sum();
            for set in s.sets() {
                seen.extend(set.iter().copied());
            }
            if seen.len() != total {
                failures.push(format!("{method} seed {seed} overlaps"));
            }
            if method == SamplingMethod::Balanced {
                for h in s.class_histograms(&g) {
                    if h.iter().any(|&c| c != h[0]) {
                        failures.push(format!("balanced seed {seed} unequal classes"));
                    }
                }
            }
        }
    }
    let b = sample_split(&g, SamplingMethod::Balanced, SplitSizes::default(), 0).unwrap();
    let shape_ok = b.sizes() == [336; 4] && b.class_histograms(&g).iter().all(|h| h.iter().all(|&c| c == 48));
    pass(
        failures.is_empty() && shape_ok && g.num_nodes() == 2995,
        format!(
            "300 splits disjoint, balanced histograms equal ({} failures); Cora_ML shape gives sets {:?} with 48 per class: {shape_ok}",
            failures.len(),
            b.sizes()
        ),
    )
}

fn sbm_gcn_high(repetitions: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        DataSource::synthetic(SbmConfig::default()),
        ModelSpec::preset(GnnType::Gcn, Overfitting::High),
    );
    cfg.repetitions = repetitions;
    cfg.sampling = SamplingConfig::default();
    cfg
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

/// Mean target gap of the all-off setup, reused by criterion 7.
fn criterion_5() -> (Outcome, f64) {
    let cfg = sbm_gcn_high(10);
    let t = Instant::now();
    let report = single_threaded(|| run_experiment(&cfg, None)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let Some(s) = report.summary else {
        return (
            pass(
                false,
                format!("no repetition finished: {:?}", report.repetitions[0].failure),
            ),
            0.0,
        );
    };
    let ok = s.effective_n == 10 && s.target_gap >= 0.15 && s.attack.mean.auc >= 0.55 && secs < 600.0;
    (
        pass(
            ok,
            format!(
                "SBM 1000 nodes, GCN high: mean gap {:.3}, mean AUC {:.3} (std {:.3}), acc {:.3}, n={}, {secs:.0}s single-threaded",
                s.target_gap, s.attack.mean.auc, s.attack.std.auc, s.attack.mean.accuracy, s.effective_n
            ),
        ),
        s.target_gap,
    )
}

fn criterion_6() -> Outcome {
    let mut cfg = sbm_gcn_high(10);
    cfg.shadow = Some(cfg.target.clone());
    cfg.target.model.epochs = Some(0);
    let report = run_experiment(&cfg, None).unwrap();
    let Some(s) = report.summary else {
        return pass(false, "no repetition finished".into());
    };
    let a = s.attack.mean.auc;
    pass(
        (0.45..=0.55).contains(&a) && s.effective_n == 10,
        format!(
            "untrained target: mean AUC {a:.3} (std {:.3}) over {} repetitions",
            s.attack.std.auc, s.effective_n
        ),
    )
}

fn criterion_7(off_gap: f64, tmp: &Path) -> Outcome {
    let cfg = sbm_gcn_high(10);
    let g = generate_sbm(&SbmConfig::default()).unwrap();
    let mut spec = cfg.target.model.clone();
    spec.defenses = Some(DefenseFlags::from_array([false, false, true, false]));
    let mut gaps = Vec::new();
    for i in 0..cfg.repetitions {
        let seed = cfg.base_seed + i as u64;
        let split = sample_split(
            &g,
            SamplingMethod::Random,
            SplitSizes::default(),
            derive_seed(seed, stream::SPLIT_TARGET),
        )
        .unwrap();
        let m = train_on_split(
            &g,
            &split.target_train,
            &split.target_test,
            &spec.resolve(derive_seed(seed, stream::TRAIN_TARGET)),
        )
        .unwrap();
        gaps.push(m.overfitting_gap());
    }
    let reg_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;

    // Grid layout through the binary on a small graph.
    let tiny = r#"[target.data.synthetic]
num_nodes = 160
feature_dim = 12
intra_edge_prob = 0.05
inter_edge_prob = 0.01

[target.model]
gnn_type = "gcn"
epochs = 3
hidden_dim = 8

[attack]
rate_set = [1.0]

[attack.mlp]
hidden = [8]
epochs = 3
"#;
    fs::write(tmp.join("grid.toml"), tiny).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lomia"))
        .args(["defense-grid", "--config", "grid.toml", "--out", "grid"])
        .current_dir(tmp)
        .output()
        .unwrap();
    let csv = fs::read_to_string(tmp.join("grid/defense_grid.csv")).unwrap_or_default();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    let ordered = rows.len() == 16
        && DefenseFlags::grid().iter().enumerate().all(|(i, f)| {
            let a = f.as_array().map(u8::from);
            rows[i].starts_with(&format!("{i},{},{},{},{},", a[0], a[1], a[2], a[3]))
        });
    pass(
        out.status.success() && ordered && reg_gap < off_gap,
        format!(
            "gap with weight decay 0.5: {reg_gap:.3} vs {off_gap:.3} without; defense grid rows {} in order: {ordered}",
            rows.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let Ok(path) = std::env::var("LOMIA_CORA_ML_BUNDLE") else {
        return Outcome {
            pass: None,
            detail: "set LOMIA_CORA_ML_BUNDLE to a Cora_ML bundle directory to run".into(),
        };
    };
    let mut cfg = ExperimentConfig::new(
        DataSource::bundle(path),
        ModelSpec::preset(GnnType::Gcn, Overfitting::Low),
    );
    cfg.repetitions = 10;
    cfg.sampling.method = SamplingMethod::Balanced;
    let report = match run_experiment(&cfg, None) {
        Ok(r) => r,
        Err(e) => return pass(false, format!("run failed: {e}")),
    };
    let Some(s) = report.summary else {
        return pass(false, "no repetition finished".into());
    };
    let (acc, a) = (s.attack.mean.accuracy, s.attack.mean.auc);
    pass(
        (acc - 0.613).abs() <= 0.07 && (a - 0.666).abs() <= 0.07,
        format!("Cora_ML GCN low, balanced: accuracy {acc:.3} (expected 0.613), AUC {a:.3} (expected 0.666)"),
    )
}

fn criterion_9(tmp: &Path) -> Outcome {
    let mut cfg = sbm_gcn_high(2);
    cfg.target.data = DataSource::synthetic(SbmConfig {
        num_nodes: 400,
        ..SbmConfig::default()
    });
    cfg.shadow = Some(SideConfig {
        data: cfg.target.data.clone(),
        model: ModelSpec::preset(GnnType::Gat, Overfitting::High),
    });
    cfg.baselines = vec![lomia::attack::BaselineVariant::Combined];
    fs::write(tmp.join("det.toml"), cfg.echo().unwrap()).unwrap();
    let mut outputs = Vec::new();
    for dir in ["det_a", "det_b"] {
        let out = Command::new(env!("CARGO_BIN_EXE_lomia"))
            .args(["run", "--config", "det.toml", "--out", dir])
            .current_dir(tmp)
            .output()
            .unwrap();
        outputs.push((
            out.status.success(),
            fs::read(tmp.join(dir).join("aggregate.csv")).unwrap_or_default(),
        ));
    }
    let same = outputs[0].1 == outputs[1].1;
    pass(
        outputs.iter().all(|o| o.0) && same && !outputs[0].1.is_empty(),
        format!(
            "two runs of one config: aggregate CSVs byte-identical: {same} ({} bytes)",
            outputs[0].1.len()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let mut results = Vec::new();
    let mut run = |n: usize, o: Outcome| {
        report(n, &o);
        results.push((n, o));
    };
    run(1, criterion_1());
    run(2, criterion_2());
    run(3, criterion_3());
    run(4, criterion_4());
    let (c5, off_gap) = criterion_5();
    run(5, c5);
    run(6, criterion_6());
    run(7, criterion_7(off_gap, tmp.path()));
    run(8, criterion_8());
    run(9, criterion_9(tmp.path()));
    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, o)| o.pass == Some(false))
        .map(|(n, _)| *n)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
