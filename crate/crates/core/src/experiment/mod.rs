//! Declarative experiments: one config drives split, target and shadow
//! training, feature extraction, the attack and its evaluation, repeated over
//! seeds. Sweeps over defense toggles and mismatched target/shadow settings
//! are built on the same runner.
//!
//! Repetition `i` uses seed `base_seed + i`; each stage draws from
//! `derive_seed(seed, stream::*)` (see [`crate::rng::stream`]).

mod config;
mod runner;
mod sweeps;

pub use config::{
    ArtifactSettings, AttackSettings, DataSource, ExperimentConfig, ExtremaSource, ModelSpec, RelaxationAxisKind,
    RelaxationConfig, ReportFormat, SamplingConfig, SideConfig,
};
pub use runner::{
    fingerprint_text, role_view, run_experiment, train_on_split, AttackOutcome, BaselineOutcome, BaselineSummary,
    ModelSummary, QueryAudit, RepetitionReport, RunReport, RunSummary, StageFailure, AGGREGATE_HEADER,
    DECISION_THRESHOLD,
};
pub use sweeps::{
    defense_cell_config, relaxation_cell_config, run_defense_grid, run_relaxation_matrix, DefenseGridReport,
    DefenseRow, RelaxationMatrix, DEFENSE_GRID_HEADER,
};
