//! Membership inference from predicted labels: feature acquisition through a
//! [`crate::graph::LabelOracle`], the attack classifier, and posterior-based
//! reference attacks.

mod baseline;
mod features;
mod model;
mod table;

pub use baseline::{baseline_dataset, baseline_features, BaselineVariant};
pub use features::{
    build_attack_dataset, extract_attack_features, feature_schema, AttackFeatureVector, Direction, ExtractionParams,
    MaskBlock, RateSet, FEATURE_SCHEMA_VERSION,
};
pub use model::{
    train_attack_model, AttackMlpConfig, AttackModel, EpochMetrics, SelectionStrategy, Standardizer, TrainedAttack,
};
pub use table::{AttackDataset, AttackRecord};
