//! `lomia`: command-line front end for the attack pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lomia::attack::{BaselineVariant, SelectionStrategy};
use lomia::data::{FeatureEncoding, SamplingMethod};
use lomia::eval::ImportanceMetric;
use lomia::experiment::{ExtremaSource, ReportFormat};
use lomia::gnn::{GnnType, Overfitting};
use lomia::Error;

#[derive(Parser, Debug)]
#[command(
    name = "lomia",
    version,
    about = "Label-only membership inference against node-level GNNs"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Experiment config (TOML). For gen-synthetic, an SBM config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed; overrides `base_seed` for config-driven commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub repetitions: Option<usize>,
    #[arg(long, global = true, value_parser = parse_format)]
    pub format: Option<ReportFormat>,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

macro_rules! from_str_parser {
    ($name:ident, $ty:ty) => {
        fn $name(s: &str) -> Result<$ty, String> {
            s.parse().map_err(|e: Error| e.to_string())
        }
    };
}

from_str_parser!(parse_gnn, GnnType);
from_str_parser!(parse_preset, Overfitting);
from_str_parser!(parse_method, SamplingMethod);
from_str_parser!(parse_selection, SelectionStrategy);
from_str_parser!(parse_encoding, FeatureEncoding);
from_str_parser!(parse_baseline, BaselineVariant);

fn parse_metric(s: &str) -> Result<ImportanceMetric, String> {
    match s {
        "acc" | "accuracy" => Ok(ImportanceMetric::Accuracy),
        "auc" => Ok(ImportanceMetric::Auc),
        other => Err(format!("unknown importance metric {other:?}")),
    }
}

fn parse_extrema(s: &str) -> Result<ExtremaSource, String> {
    match s {
        "shadow" => Ok(ExtremaSource::Shadow),
        "target" => Ok(ExtremaSource::Target),
        other => Err(format!("unknown extrema source {other:?}")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Role {
    Target,
    Shadow,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a stochastic-block-model graph as a bundle directory.
    GenSynthetic {
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        feature_dim: Option<usize>,
        #[arg(long)]
        signal: Option<f64>,
        #[arg(long)]
        intra: Option<f64>,
        #[arg(long)]
        inter: Option<f64>,
        #[arg(long, default_value = "binary_f32", value_parser = parse_encoding)]
        encoding: FeatureEncoding,
    },
    /// Sample the four disjoint node sets of a bundle.
    Split {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "random", value_parser = parse_method)]
        method: SamplingMethod,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        set_size: Option<usize>,
    },
    /// Train the target or shadow model of a split and save a checkpoint.
    Train {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long, default_value = "gcn", value_parser = parse_gnn)]
        gnn: GnnType,
        #[arg(long, default_value = "high", value_parser = parse_preset)]
        preset: Overfitting,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Query a checkpoint through its label oracle and write the attack table.
    ExtractFeatures {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated masking rates.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        #[arg(long, default_value = "shadow", value_parser = parse_extrema)]
        extrema_from: ExtremaSource,
    },
    /// Train the attack classifier on a shadow attack table.
    Attack {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        holdout_fraction: f64,
        #[arg(long, default_value = "test_acc", value_parser = parse_selection)]
        selection: SelectionStrategy,
        #[arg(long)]
        epochs: Option<usize>,
        /// Target-side table; only used by `evaluate_acc` selection.
        #[arg(long)]
        evaluation: Option<PathBuf>,
    },
    /// Score a target attack table with a trained attack model.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = lomia::eval::DEFAULT_FPR_TARGET)]
        fpr_target: f64,
    },
    /// Full experiment from one config file.
    Run {
        /// Adds baselines to those listed in the config.
        #[arg(long, value_delimiter = ',', value_parser = parse_baseline)]
        baselines: Vec<BaselineVariant>,
    },
    /// One experiment per defense combination.
    DefenseGrid,
    /// Target-versus-shadow setting matrix from the config's relaxation section.
    RelaxationMatrix,
    /// Permutation importance of attack features.
    Importance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "acc", value_parser = parse_metric)]
        metric: ImportanceMetric,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Argument(_) => 2,
        Error::Format { .. } | Error::Io { .. } => 3,
        Error::Numeric { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
