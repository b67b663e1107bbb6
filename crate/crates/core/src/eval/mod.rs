//! Attack quality metrics, repetition summaries and permutation importance.

mod importance;
mod metrics;

pub use importance::{permutation_importance, FeatureImportance, ImportanceMetric};
pub use metrics::{
    aggregate_repetitions, auc, compute_metrics, tpr_at_fpr, MetricValues, MetricsReport, MetricsSummary,
    DEFAULT_FPR_TARGET,
};
