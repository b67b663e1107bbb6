use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ExtremaSource, ReportFormat};
use crate::attack::{
    baseline_dataset, build_attack_dataset, train_attack_model, AttackDataset, AttackMlpConfig, BaselineVariant,
    ExtractionParams, SelectionStrategy, FEATURE_SCHEMA_VERSION,
};
use crate::data::{feature_extrema, sample_split, DatasetSplit};
use crate::error::{Error, Result};
use crate::eval::{aggregate_repetitions, compute_metrics, MetricValues, MetricsReport, MetricsSummary};
use crate::gnn::checkpoint::save_checkpoint;
use crate::gnn::{train_gnn, GnnConfig, TrainedGnn};
use crate::graph::{Graph, InducedSubgraph, LabelOracle, ModelLabelOracle, ModelPosteriorOracle, PosteriorOracle};
use crate::io::write_atomic;
use crate::rng::{derive_seed, derive_seed_path, stream};

/// Membership threshold applied to attack scores.
pub const DECISION_THRESHOLD: f64 = 0.5;

pub const AGGREGATE_HEADER: &str = "dataset,gnn,test_acc,train_acc,acc,pre,rec,auc,f1,tpr_at_fpr";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub config: GnnConfig,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub gap: f64,
    pub train_set_id: String,
}

impl ModelSummary {
    fn of(m: &TrainedGnn) -> Self {
        Self {
            config: m.config().clone(),
            train_accuracy: m.train_accuracy,
            test_accuracy: m.test_accuracy,
            gap: m.overfitting_gap(),
            train_set_id: m.train_set_id.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub metrics: MetricsReport,
    pub selected_epoch: usize,
    pub selection: SelectionStrategy,
    pub oracle_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub variant: BaselineVariant,
    #[serde(flatten)]
    pub outcome: AttackOutcome,
    pub shadow_posterior_queries: u64,
    pub target_posterior_queries: u64,
}

/// Oracle usage of one repetition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryAudit {
    pub shadow_label_queries: u64,
    pub target_label_queries: u64,
    /// `sum over attacked target nodes of 2 * |rates| * (2 + degree)`.
    pub target_label_queries_expected: u64,
    /// Posterior queries the label-only attack sent to the target model. The
    /// attack path only ever holds a [`LabelOracle`], so this is always 0.
    pub target_posterior_queries: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub repetition: usize,
    pub seed: u64,
    pub target: Option<ModelSummary>,
    pub shadow: Option<ModelSummary>,
    pub attack: Option<AttackOutcome>,
    pub baselines: Vec<BaselineOutcome>,
    pub queries: Option<QueryAudit>,
    pub artifacts: Vec<String>,
    pub failure: Option<StageFailure>,
}

impl RepetitionReport {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub requested: usize,
    /// Repetitions that finished; the means below are over these only.
    pub effective_n: usize,
    pub partial: bool,
    pub attack: MetricsSummary,
    pub target_train_accuracy: f64,
    pub target_test_accuracy: f64,
    pub target_gap: f64,
    pub shadow_train_accuracy: f64,
    pub shadow_test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub variant: BaselineVariant,
    pub summary: MetricsSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub dataset: String,
    pub gnn: String,
    pub config_fingerprint: String,
    pub config_echo: String,
    pub repetitions: Vec<RepetitionReport>,
    pub summary: Option<RunSummary>,
    pub baselines: Vec<BaselineSummary>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn effective_n(&self) -> usize {
        self.repetitions.iter().filter(|r| r.succeeded()).count()
    }

    pub fn first_failure(&self) -> Option<&StageFailure> {
        self.repetitions.iter().find_map(|r| r.failure.as_ref())
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = format!("{AGGREGATE_HEADER}\n");
        if let Some(s) = &self.summary {
            out.push_str(&table_row(
                &[&self.dataset, &self.gnn],
                s.target_test_accuracy,
                s.target_train_accuracy,
                &s.attack.mean,
                &[],
            ));
        }
        out
    }

    pub fn baselines_csv(&self) -> String {
        let mut out = format!("baseline,{AGGREGATE_HEADER},n\n");
        if let Some(s) = &self.summary {
            for b in &self.baselines {
                out.push_str(&table_row(
                    &[b.variant.name(), &self.dataset, &self.gnn],
                    s.target_test_accuracy,
                    s.target_train_accuracy,
                    &b.summary.mean,
                    &[b.summary.n.to_string()],
                ));
            }
        }
        out
    }

    /// One line per repetition: JSON objects, or a flat CSV table.
    pub fn repetition_lines(&self, format: ReportFormat) -> Result<String> {
        let mut out = String::new();
        match format {
            ReportFormat::JsonLines => {
                for r in &self.repetitions {
                    out.push_str(&serde_json::to_string(r).map_err(|e| Error::arg(e.to_string()))?);
                    out.push('\n');
                }
            }
            ReportFormat::Csv => {
                out.push_str(
                    "repetition,seed,status,target_train_acc,target_test_acc,shadow_train_acc,shadow_test_acc,acc,pre,rec,auc,f1,tpr_at_fpr,target_label_queries\n",
                );
                for r in &self.repetitions {
                    let status = match &r.failure {
                        None => "ok".to_string(),
                        Some(f) => format!("failed:{}", f.stage),
                    };
                    write!(out, "{},{},{}", r.repetition, r.seed, status).expect("string write");
                    for m in [&r.target, &r.shadow] {
                        match m {
                            Some(m) => write!(out, ",{},{}", m.train_accuracy, m.test_accuracy),
                            None => write!(out, ",,"),
                        }
                        .expect("string write");
                    }
                    match &r.attack {
                        Some(a) => a
                            .metrics
                            .values
                            .as_array()
                            .iter()
                            .for_each(|v| write!(out, ",{v}").expect("string write")),
                        None => out.push_str(",,,,,,"),
                    }
                    match &r.queries {
                        Some(q) => writeln!(out, ",{}", q.target_label_queries),
                        None => writeln!(out, ","),
                    }
                    .expect("string write");
                }
            }
        }
        Ok(out)
    }
}

fn table_row(lead: &[&str], test_acc: f64, train_acc: f64, m: &MetricValues, tail: &[String]) -> String {
    let mut row = lead.join(",");
    write!(row, ",{test_acc},{train_acc}").expect("string write");
    for v in m.as_array() {
        write!(row, ",{v}").expect("string write");
    }
    for t in tail {
        write!(row, ",{t}").expect("string write");
    }
    row.push('\n');
    row
}

pub fn fingerprint_text(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// One side (target or shadow) after training.
struct Side {
    view: InducedSubgraph,
    members: Vec<usize>,
    nonmembers: Vec<usize>,
    model: TrainedGnn,
}

fn to_view(view: &InducedSubgraph, nodes: &[usize]) -> Vec<usize> {
    nodes
        .iter()
        .map(|&v| view.to_new(v).expect("split sets lie inside their view"))
        .collect()
}

/// The induced graph on `train ∪ test` plus both sets in its local ids.
pub fn role_view(graph: &Graph, train: &[usize], test: &[usize]) -> Result<(InducedSubgraph, Vec<usize>, Vec<usize>)> {
    let mut nodes = [train, test].concat();
    nodes.sort_unstable();
    let view = graph.induced_subgraph(&nodes)?;
    let members = to_view(&view, train);
    let nonmembers = to_view(&view, test);
    Ok((view, members, nonmembers))
}

/// Trains on the graph induced by `train` and reports test accuracy on `test`
/// inside the `train ∪ test` view.
pub fn train_on_split(graph: &Graph, train: &[usize], test: &[usize], config: &GnnConfig) -> Result<TrainedGnn> {
    let (view, _, nonmembers) = role_view(graph, train, test)?;
    let train_graph = graph.induced_subgraph(train)?.graph;
    train_gnn(config, &train_graph, &view.graph, &nonmembers)
}

fn train_side(graph: &Graph, train: &[usize], test: &[usize], config: &GnnConfig) -> Result<Side> {
    let (view, members, nonmembers) = role_view(graph, train, test)?;
    let train_graph = graph.induced_subgraph(train)?.graph;
    let model = train_gnn(config, &train_graph, &view.graph, &nonmembers)?;
    Ok(Side {
        view,
        members,
        nonmembers,
        model,
    })
}

#[allow(clippy::too_many_arguments)]
fn fit_and_score(
    shadow: &AttackDataset,
    target: &AttackDataset,
    mut mlp: AttackMlpConfig,
    selection: SelectionStrategy,
    holdout_fraction: f64,
    seed: u64,
    fpr_target: f64,
    fingerprint: &str,
) -> Result<AttackOutcome> {
    let (train, holdout) = shadow.stratified_split(holdout_fraction, derive_seed(seed, stream::ATTACK_HOLDOUT))?;
    mlp.seed = derive_seed_path(seed, &[stream::ATTACK_MODEL, mlp.seed]);
    let eval = (selection == SelectionStrategy::EvaluateAcc).then_some(target);
    let trained = train_attack_model(&train, &holdout, &mlp, selection, eval)?;
    let scores = trained.model.scores(target)?;
    let metrics =
        compute_metrics(&scores, &target.labels(), DECISION_THRESHOLD, fpr_target)?.with_provenance(seed, fingerprint);
    Ok(AttackOutcome {
        metrics,
        selected_epoch: trained.selected_epoch,
        selection,
        oracle_only: trained.oracle_only,
    })
}

/// Everything a repetition reads but never mutates.
struct Shared<'a> {
    config: &'a ExperimentConfig,
    target_graph: &'a Graph,
    shadow_graph: &'a Graph,
    same_graph: bool,
    fingerprint: &'a str,
    out: Option<&'a Path>,
}

struct Tagged<'a>(&'a mut RepetitionReport);

impl Tagged<'_> {
    fn at<T>(&mut self, stage: &str, r: Result<T>) -> std::result::Result<T, ()> {
        r.map_err(|e| {
            self.0.failure = Some(StageFailure {
                stage: stage.to_string(),
                kind: e.kind().to_string(),
                message: e.to_string(),
            });
        })
    }
}

fn run_repetition(ctx: &Shared<'_>, index: usize) -> RepetitionReport {
    let seed = ctx.config.base_seed.wrapping_add(index as u64);
    let mut report = RepetitionReport {
        repetition: index,
        seed,
        target: None,
        shadow: None,
        attack: None,
        baselines: Vec::new(),
        queries: None,
        artifacts: Vec::new(),
        failure: None,
    };
    let _ = repetition_body(ctx, index, seed, &mut report);
    report
}

fn repetition_body(
    ctx: &Shared<'_>,
    index: usize,
    seed: u64,
    report: &mut RepetitionReport,
) -> std::result::Result<(), ()> {
    let cfg = ctx.config;
    let method = cfg.sampling.method;
    let sizes = cfg.sampling.sizes();
    let mut artifacts = Vec::new();
    let mut t = Tagged(report);

    let target_split = t.at(
        "split",
        sample_split(ctx.target_graph, method, sizes, derive_seed(seed, stream::SPLIT_TARGET)),
    )?;
    let shadow_split = if ctx.same_graph {
        target_split.clone()
    } else {
        t.at(
            "split",
            sample_split(ctx.shadow_graph, method, sizes, derive_seed(seed, stream::SPLIT_SHADOW)),
        )?
    };

    let target_cfg = cfg.target.model.resolve(derive_seed(seed, stream::TRAIN_TARGET));
    let target = t.at(
        "train_target",
        train_side(
            ctx.target_graph,
            &target_split.target_train,
            &target_split.target_test,
            &target_cfg,
        ),
    )?;
    t.0.target = Some(ModelSummary::of(&target.model));
    let shadow_cfg = cfg.shadow_side().model.resolve(derive_seed(seed, stream::TRAIN_SHADOW));
    let shadow = t.at(
        "train_shadow",
        train_side(
            ctx.shadow_graph,
            &shadow_split.shadow_train,
            &shadow_split.shadow_test,
            &shadow_cfg,
        ),
    )?;
    t.0.shadow = Some(ModelSummary::of(&shadow.model));

    let extrema = match cfg.attack.extrema {
        ExtremaSource::Shadow => feature_extrema(&shadow.view.graph),
        ExtremaSource::Target => feature_extrema(&target.view.graph),
    };
    let params = ExtractionParams {
        rate_set: cfg.attack.rate_set.clone(),
        extrema,
    };
    let shadow_oracle = ModelLabelOracle::new(&shadow.model);
    let shadow_data = t.at(
        "shadow_features",
        build_attack_dataset(
            &shadow_oracle,
            &shadow.view.graph,
            &shadow.members,
            &shadow.nonmembers,
            &params,
            derive_seed(seed, stream::FEATURES_SHADOW),
        ),
    )?;
    let target_oracle = ModelLabelOracle::new(&target.model);
    let target_data = t.at(
        "target_features",
        build_attack_dataset(
            &target_oracle,
            &target.view.graph,
            &target.members,
            &target.nonmembers,
            &params,
            derive_seed(seed, stream::FEATURES_TARGET),
        ),
    )?;
    let rates = params.rate_set.len() as u64;
    let g = &target.view.graph;
    t.0.queries = Some(QueryAudit {
        shadow_label_queries: shadow_oracle.queries_issued(),
        target_label_queries: target_oracle.queries_issued(),
        target_label_queries_expected: target
            .members
            .iter()
            .chain(&target.nonmembers)
            .map(|&v| 2 * rates * (2 + g.degree(v) as u64))
            .sum(),
        target_posterior_queries: 0,
    });

    let outcome = t.at(
        "attack",
        fit_and_score(
            &shadow_data,
            &target_data,
            cfg.attack.mlp.clone(),
            cfg.attack.selection,
            cfg.attack.holdout_fraction,
            seed,
            cfg.fpr_target,
            ctx.fingerprint,
        ),
    )?;
    t.0.attack = Some(outcome);

    for (k, &variant) in cfg.baselines.iter().enumerate() {
        let stage = format!("baseline_{variant}");
        let base_seed = derive_seed(seed, stream::BASELINE_BASE + k as u64);
        let s_oracle = ModelPosteriorOracle::new(&shadow.model);
        let t_oracle = ModelPosteriorOracle::new(&target.model);
        let result = baseline_dataset(
            &s_oracle,
            &shadow.view.graph,
            &shadow.members,
            &shadow.nonmembers,
            variant,
        )
        .and_then(|sd| {
            let td = baseline_dataset(
                &t_oracle,
                &target.view.graph,
                &target.members,
                &target.nonmembers,
                variant,
            )?;
            fit_and_score(
                &sd,
                &td,
                cfg.attack.mlp.clone(),
                cfg.attack.selection,
                cfg.attack.holdout_fraction,
                base_seed,
                cfg.fpr_target,
                ctx.fingerprint,
            )
        });
        let outcome = t.at(&stage, result)?;
        t.0.baselines.push(BaselineOutcome {
            variant,
            outcome,
            shadow_posterior_queries: s_oracle.queries_issued(),
            target_posterior_queries: t_oracle.queries_issued(),
        });
    }

    if let Some(out) = ctx.out {
        let rel_dir = format!("rep_{index:03}");
        let dir = out.join(&rel_dir);
        let written = write_repetition_artifacts(
            ctx,
            &dir,
            &target_split,
            (!ctx.same_graph).then_some(&shadow_split),
            [&target, &shadow],
            [&target_data, &shadow_data],
        );
        let names = t.at("artifacts", written)?;
        artifacts.extend(names.into_iter().map(|n| format!("{rel_dir}/{n}")));
    }
    t.0.artifacts = artifacts;
    Ok(())
}

fn write_repetition_artifacts(
    ctx: &Shared<'_>,
    dir: &Path,
    target_split: &DatasetSplit,
    shadow_split: Option<&DatasetSplit>,
    models: [&Side; 2],
    tables: [&AttackDataset; 2],
) -> Result<Vec<String>> {
    let settings = &ctx.config.artifacts;
    let mut names = Vec::new();
    if settings.splits {
        write_atomic(&dir.join("split_target.json"), to_json(target_split)?.as_bytes())?;
        names.push("split_target.json".to_string());
        if let Some(s) = shadow_split {
            write_atomic(&dir.join("split_shadow.json"), to_json(s)?.as_bytes())?;
            names.push("split_shadow.json".to_string());
        }
    }
    if settings.attack_tables {
        for (table, name) in tables.iter().zip(["target_features.csv", "shadow_features.csv"]) {
            table.write_csv(&dir.join(name), FEATURE_SCHEMA_VERSION)?;
            names.push(name.to_string());
        }
    }
    if settings.checkpoints {
        for (side, name) in models.iter().zip(["target_model", "shadow_model"]) {
            save_checkpoint(&side.model, &dir.join(name))?;
            names.push(name.to_string());
        }
    }
    Ok(names)
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::arg(e.to_string()))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn summarize(
    config: &ExperimentConfig,
    reps: &[RepetitionReport],
) -> Result<(Option<RunSummary>, Vec<BaselineSummary>)> {
    let ok: Vec<&RepetitionReport> = reps.iter().filter(|r| r.succeeded()).collect();
    if ok.is_empty() {
        return Ok((None, Vec::new()));
    }
    let attack: Vec<MetricsReport> = ok
        .iter()
        .map(|r| {
            r.attack
                .as_ref()
                .expect("finished repetitions have an attack")
                .metrics
                .clone()
        })
        .collect();
    let tgt = |g: fn(&ModelSummary) -> f64| mean(ok.iter().map(|r| g(r.target.as_ref().expect("finished"))));
    let shd = |g: fn(&ModelSummary) -> f64| mean(ok.iter().map(|r| g(r.shadow.as_ref().expect("finished"))));
    let summary = RunSummary {
        requested: config.repetitions,
        effective_n: ok.len(),
        partial: ok.len() < config.repetitions,
        attack: aggregate_repetitions(&attack)?,
        target_train_accuracy: tgt(|m| m.train_accuracy),
        target_test_accuracy: tgt(|m| m.test_accuracy),
        target_gap: tgt(|m| m.gap),
        shadow_train_accuracy: shd(|m| m.train_accuracy),
        shadow_test_accuracy: shd(|m| m.test_accuracy),
    };
    let mut baselines = Vec::new();
    for (k, &variant) in config.baselines.iter().enumerate() {
        let reports: Vec<MetricsReport> = ok.iter().map(|r| r.baselines[k].outcome.metrics.clone()).collect();
        baselines.push(BaselineSummary {
            variant,
            summary: aggregate_repetitions(&reports)?,
        });
    }
    Ok((Some(summary), baselines))
}

/// Runs every repetition of `config`. Failed repetitions are recorded with
/// the stage that failed and left out of the aggregates. Artifacts are written
/// under `out` (or the config's `output_dir`) when either is set.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunReport> {
    config.validate()?;
    config.check_paths()?;
    let echo = config.echo()?;
    let fingerprint = fingerprint_text(&echo);
    let out: Option<PathBuf> = out.map(Path::to_path_buf).or_else(|| config.output_dir.clone());

    let target_graph = config.target.data.load()?;
    let shadow_side = config.shadow_side();
    let same_graph = shadow_side.data.same_graph(&config.target.data);
    let shadow_graph_owned = if same_graph {
        None
    } else {
        Some(shadow_side.data.load()?)
    };
    let shadow_graph = shadow_graph_owned.as_ref().unwrap_or(&target_graph);
    if target_graph.feature_dim() != shadow_graph.feature_dim() {
        return Err(Error::Config(format!(
            "target graph has {} features, shadow graph has {}; the attack model needs one feature space",
            target_graph.feature_dim(),
            shadow_graph.feature_dim()
        )));
    }

    let ctx = Shared {
        config,
        target_graph: &target_graph,
        shadow_graph,
        same_graph,
        fingerprint: &fingerprint,
        out: out.as_deref(),
    };
    let repetitions: Vec<RepetitionReport> = (0..config.repetitions)
        .into_par_iter()
        .map(|i| run_repetition(&ctx, i))
        .collect();
    let (summary, baselines) = summarize(config, &repetitions)?;
    let mut report = RunReport {
        name: config.name.clone(),
        dataset: config.target.data.display_label(),
        gnn: config.target.model.gnn_type.as_str().to_string(),
        config_fingerprint: fingerprint,
        config_echo: echo,
        repetitions,
        summary,
        baselines,
        artifacts: Vec::new(),
    };
    if let Some(dir) = &out {
        report.artifacts = write_run_artifacts(&report, config.artifacts.report_format, dir)?;
    }
    Ok(report)
}

fn write_run_artifacts(report: &RunReport, format: ReportFormat, dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        write_atomic(&dir.join(name), text.as_bytes())?;
        names.push(name.to_string());
        Ok(())
    };
    put("config.toml", &report.config_echo)?;
    let reps = match format {
        ReportFormat::JsonLines => "repetitions.jsonl",
        ReportFormat::Csv => "repetitions.csv",
    };
    put(reps, &report.repetition_lines(format)?)?;
    put("aggregate.csv", &report.aggregate_csv())?;
    if !report.baselines.is_empty() {
        put("baselines.csv", &report.baselines_csv())?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        name: &'a str,
        dataset: &'a str,
        gnn: &'a str,
        config_fingerprint: &'a str,
        summary: &'a Option<RunSummary>,
        baselines: &'a [BaselineSummary],
    }
    put(
        "summary.json",
        &to_json(&Summary {
            name: &report.name,
            dataset: &report.dataset,
            gnn: &report.gnn,
            config_fingerprint: &report.config_fingerprint,
            summary: &report.summary,
            baselines: &report.baselines,
        })?,
    )?;
    names.push("report.json".to_string());
    let mut full = report.clone();
    full.artifacts = names.clone();
    write_atomic(&dir.join("report.json"), to_json(&full)?.as_bytes())?;
    Ok(names)
}
