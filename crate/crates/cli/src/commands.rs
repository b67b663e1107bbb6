use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use lomia::attack::{
    build_attack_dataset, train_attack_model, AttackDataset, AttackMlpConfig, AttackModel, ExtractionParams, RateSet,
    SelectionStrategy, FEATURE_SCHEMA_VERSION,
};
use lomia::data::{
    feature_extrema, generate_sbm, load_bundle, sample_split, save_bundle, DatasetSplit, SbmConfig, SplitSizes,
};
use lomia::eval::{compute_metrics, permutation_importance, MetricValues};
use lomia::experiment::{
    role_view, run_defense_grid, run_experiment, run_relaxation_matrix, train_on_split, ExperimentConfig,
    ExtremaSource, ModelSpec, ReportFormat, RunReport,
};
use lomia::gnn::checkpoint::{load_checkpoint, save_checkpoint};
use lomia::graph::{Graph, ModelLabelOracle};
use lomia::io::write_atomic;
use lomia::Error;
use serde::{Deserialize, Serialize};

use crate::{exit_code, Cli, Command, Global, Role};

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn need<'a>(v: &'a Option<PathBuf>, flag: &str, cmd: &str) -> Result<&'a Path> {
    v.as_deref()
        .ok_or_else(|| Error::Config(format!("{cmd} needs --{flag}")).into())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Format {
            path: path.to_path_buf(),
            row: Some(e.line()),
            message: e.to_string(),
        }
        .into()
    })
}

/// Writes to `out` when given, stdout otherwise.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        })?,
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SavedAttack {
    schema: String,
    selection: SelectionStrategy,
    selected_epoch: usize,
    oracle_only: bool,
    model: AttackModel,
}

pub fn dispatch(cli: Cli) -> std::result::Result<(), Failure> {
    let g = cli.global;
    match cli.command {
        Command::GenSynthetic {
            nodes,
            classes,
            feature_dim,
            signal,
            intra,
            inter,
            encoding,
        } => {
            let out = need(&g.out, "out", "gen-synthetic")?;
            let mut cfg: SbmConfig = match &g.config {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => SbmConfig::default(),
            };
            macro_rules! set {
                ($($v:ident => $f:ident),*) => {$(if let Some(v) = $v { cfg.$f = v; })*};
            }
            set!(nodes => num_nodes, classes => num_classes, feature_dim => feature_dim, signal => feature_signal, intra => intra_edge_prob, inter => inter_edge_prob);
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
            let graph = generate_sbm(&cfg)?;
            save_bundle(&graph, out, encoding)?;
            eprintln!(
                "wrote {} nodes, {} edges, {} classes to {}",
                graph.num_nodes(),
                graph.num_edges(),
                graph.num_classes(),
                out.display()
            );
            Ok(())
        }
        Command::Split {
            bundle,
            method,
            per_class,
            set_size,
        } => {
            let graph = load_bundle(&bundle)?;
            let split = sample_split(&graph, method, SplitSizes { per_class, set_size }, g.seed.unwrap_or(0))?;
            emit(g.out.as_deref(), &(json(&split) + "\n"))
        }
        Command::Train {
            bundle,
            split,
            role,
            gnn,
            preset,
            epochs,
        } => {
            let out = need(&g.out, "out", "train")?;
            let (graph, split) = bundle_and_split(&bundle, &split)?;
            let (train, test) = role_sets(&split, role);
            let mut spec = ModelSpec::preset(gnn, preset);
            spec.epochs = epochs;
            let model = train_on_split(&graph, train, test, &spec.resolve(g.seed.unwrap_or(0)))?;
            save_checkpoint(&model, out)?;
            println!(
                "{{\"train_accuracy\": {}, \"test_accuracy\": {}, \"gap\": {}}}",
                model.train_accuracy,
                model.test_accuracy,
                model.overfitting_gap()
            );
            Ok(())
        }
        Command::ExtractFeatures {
            bundle,
            split,
            role,
            checkpoint,
            rates,
            extrema_from,
        } => {
            let (graph, split) = bundle_and_split(&bundle, &split)?;
            let model = load_checkpoint(&checkpoint)?;
            let rate_set = match rates {
                Some(r) => RateSet::new(r)?,
                None => RateSet::default(),
            };
            let extrema_role = match extrema_from {
                ExtremaSource::Shadow => Role::Shadow,
                ExtremaSource::Target => Role::Target,
            };
            let (et, ee) = role_sets(&split, extrema_role);
            let extrema = feature_extrema(&role_view(&graph, et, ee)?.0.graph);
            let (train, test) = role_sets(&split, role);
            let (view, members, nonmembers) = role_view(&graph, train, test)?;
            let oracle = ModelLabelOracle::new(&model);
            let params = ExtractionParams { rate_set, extrema };
            let data = build_attack_dataset(
                &oracle,
                &view.graph,
                &members,
                &nonmembers,
                &params,
                g.seed.unwrap_or(0),
            )?;
            emit(g.out.as_deref(), &data.to_csv(FEATURE_SCHEMA_VERSION))?;
            eprintln!(
                "{} records, {} label queries",
                data.len(),
                lomia::graph::LabelOracle::queries_issued(&oracle)
            );
            Ok(())
        }
        Command::Attack {
            features,
            holdout_fraction,
            selection,
            epochs,
            evaluation,
        } => {
            let out = need(&g.out, "out", "attack")?;
            let (data, schema) = AttackDataset::read_csv(&features)?;
            let eval = match &evaluation {
                Some(p) => Some(AttackDataset::read_csv(p)?.0),
                None => None,
            };
            let seed = g.seed.unwrap_or(0);
            let (train, holdout) = data.stratified_split(holdout_fraction, seed)?;
            let mut cfg = AttackMlpConfig {
                seed,
                ..AttackMlpConfig::default()
            };
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let trained = train_attack_model(&train, &holdout, &cfg, selection, eval.as_ref())?;
            let saved = SavedAttack {
                schema,
                selection,
                selected_epoch: trained.selected_epoch,
                oracle_only: trained.oracle_only,
                model: trained.model,
            };
            write_atomic(out, json(&saved).as_bytes())?;
            eprintln!("selected epoch {} by {selection}", saved.selected_epoch);
            Ok(())
        }
        Command::Evaluate {
            model,
            features,
            threshold,
            fpr_target,
        } => {
            let saved: SavedAttack = read_json(&model)?;
            let data = read_matching(&features, &saved)?;
            let scores = saved.model.scores(&data)?;
            let m = compute_metrics(&scores, &data.labels(), threshold, fpr_target)?;
            let text = match g.format.unwrap_or_default() {
                ReportFormat::JsonLines => serde_json::to_string(&m).expect("plain data serializes") + "\n",
                ReportFormat::Csv => {
                    let mut t = MetricValues::NAMES.join(",") + ",threshold,fpr_target,n_positive,n_negative\n";
                    for v in m.values.as_array() {
                        write!(t, "{v},").expect("string write");
                    }
                    writeln!(t, "{},{},{},{}", m.threshold, m.fpr_target, m.n_positive, m.n_negative)
                        .expect("string write");
                    t
                }
            };
            emit(g.out.as_deref(), &text)
        }
        Command::Importance {
            model,
            features,
            metric,
            repeats,
        } => {
            let saved: SavedAttack = read_json(&model)?;
            let data = read_matching(&features, &saved)?;
            let imp = permutation_importance(&saved.model, &data, metric, repeats, g.seed.unwrap_or(0))?;
            let text = match g.format.unwrap_or(ReportFormat::Csv) {
                ReportFormat::Csv => {
                    let mut t = String::from("feature,importance\n");
                    for f in &imp {
                        writeln!(t, "{},{}", f.feature, f.importance).expect("string write");
                    }
                    t
                }
                ReportFormat::JsonLines => imp
                    .iter()
                    .map(|f| serde_json::to_string(f).expect("plain data serializes") + "\n")
                    .collect(),
            };
            emit(g.out.as_deref(), &text)
        }
        Command::Run { baselines } => {
            let mut cfg = load_config(&g, "run")?;
            for b in baselines {
                if !cfg.baselines.contains(&b) {
                    cfg.baselines.push(b);
                }
            }
            cfg.validate()?;
            let report = run_experiment(&cfg, g.out.as_deref())?;
            finish_run(&report, &g, &cfg)
        }
        Command::DefenseGrid => {
            let cfg = load_config(&g, "defense-grid")?;
            let out = g.out.clone().or_else(|| cfg.output_dir.clone());
            let grid = run_defense_grid(&cfg, out.as_deref())?;
            print!("{}", grid.to_csv());
            let failed: Vec<_> = grid.rows.iter().filter_map(|r| r.failure.as_ref()).collect();
            if failed.len() == grid.rows.len() {
                return Err(stage_failure(failed[0]));
            }
            Ok(())
        }
        Command::RelaxationMatrix => {
            let cfg = load_config(&g, "relaxation-matrix")?;
            let out = g.out.clone().or_else(|| cfg.output_dir.clone());
            let m = run_relaxation_matrix(&cfg, out.as_deref())?;
            print!("{}", m.to_csv(&m.accuracy));
            let n = m.labels.len();
            if m.failures.len() == n * n {
                return Err(stage_failure(&m.failures[0].2));
            }
            Ok(())
        }
    }
}

fn stage_failure(f: &lomia::experiment::StageFailure) -> Failure {
    let code = match f.kind.as_str() {
        "format" | "io" => 3,
        "numeric" => 4,
        _ => 2,
    };
    Failure {
        code,
        message: format!("stage {}: {}", f.stage, f.message),
    }
}

/// Loads `--config` and applies the global overrides. Overrides are appended
/// to the echoed text as comments so reports show what actually ran.
fn load_config(g: &Global, cmd: &str) -> Result<ExperimentConfig> {
    let path = need(&g.config, "config", cmd)?;
    let mut cfg = ExperimentConfig::from_file(path)?;
    let mut notes = Vec::new();
    if let Some(s) = g.seed {
        cfg.base_seed = s;
        notes.push(format!("base_seed = {s}"));
    }
    if let Some(r) = g.repetitions {
        cfg.repetitions = r;
        notes.push(format!("repetitions = {r}"));
    }
    if let Some(f) = g.format {
        cfg.artifacts.report_format = f;
    }
    if !notes.is_empty() {
        let mut text = cfg.source_text.take().unwrap_or_default();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        for n in notes {
            writeln!(text, "# command-line override: {n}").expect("string write");
        }
        cfg.source_text = Some(text);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish_run(report: &RunReport, g: &Global, cfg: &ExperimentConfig) -> Result<()> {
    let written = g.out.is_some() || cfg.output_dir.is_some();
    if !written {
        print!("{}", report.repetition_lines(cfg.artifacts.report_format)?);
    }
    print!("{}", report.aggregate_csv());
    let n = report.effective_n();
    if n == 0 {
        let f = report.first_failure().expect("a run with no successes has failures");
        return Err(stage_failure(f));
    }
    if n < report.repetitions.len() {
        eprintln!(
            "warning: {} of {} repetitions failed",
            report.repetitions.len() - n,
            report.repetitions.len()
        );
    }
    Ok(())
}

fn bundle_and_split(bundle: &Path, split: &Path) -> Result<(Graph, DatasetSplit)> {
    let graph = load_bundle(bundle)?;
    let split: DatasetSplit = read_json(split)?;
    split.validate(&graph)?;
    Ok((graph, split))
}

fn role_sets(split: &DatasetSplit, role: Role) -> (&[usize], &[usize]) {
    match role {
        Role::Target => (&split.target_train, &split.target_test),
        Role::Shadow => (&split.shadow_train, &split.shadow_test),
    }
}

fn read_matching(path: &Path, saved: &SavedAttack) -> Result<AttackDataset> {
    let (data, schema) = AttackDataset::read_csv(path)?;
    if schema != saved.schema || data.columns != saved.model.columns {
        return Err(Error::Format {
            path: path.to_path_buf(),
            row: Some(2),
            message: "columns do not match the attack model".into(),
        }
        .into());
    }
    Ok(data)
}
