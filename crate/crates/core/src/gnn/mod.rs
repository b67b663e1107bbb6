//! GCN, GAT, GraphSAGE and GIN node classifiers, their presets, training and
//! checkpoints.

pub mod checkpoint;
mod config;
pub mod layers;
mod model;
mod train;

pub use config::{
    preset_config, DefenseFlags, GnnConfig, GnnType, Overfitting, DEFENSE_DROPOUT_RATE, DEFENSE_WEIGHT_DECAY,
};
pub use model::{Forward, GnnModel, LayerParams, Mode, RunningStats, TemperatureScaled, BATCHNORM_MOMENTUM};
pub use train::{accuracy, graph_fingerprint, train_gnn, TrainedGnn};
