use sha2::{Digest, Sha256};

use super::config::GnnConfig;
use super::layers::Propagation;
use super::model::{GnnModel, Mode};
use crate::error::{Error, Result};
use crate::graph::{Graph, LogitModel};
use crate::nn::{AdamState, Matrix, Tape};
use crate::rng::{derive_seed, rng_from_seed};

const DROPOUT_STREAM: u64 = 0xD80;

/// A trained node classifier. Predictions are meant to be consumed through
/// [`crate::graph::ModelLabelOracle`] or [`crate::graph::ModelPosteriorOracle`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedGnn {
    pub(crate) model: GnnModel,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Fingerprint of the graph the model was fitted on.
    pub train_set_id: String,
    pub loss_trace: Vec<f64>,
}

impl TrainedGnn {
    pub fn config(&self) -> &GnnConfig {
        self.model.config()
    }

    pub fn model(&self) -> &GnnModel {
        &self.model
    }

    /// Train accuracy minus test accuracy.
    pub fn overfitting_gap(&self) -> f64 {
        self.train_accuracy - self.test_accuracy
    }
}

impl LogitModel for TrainedGnn {
    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn logits(&self, features: &Matrix, adjacency: &[Vec<usize>]) -> Result<Matrix> {
        self.model.predict_logits(features, adjacency)
    }
}

/// Short hex fingerprint of a graph's size, labels, features and edges.
pub fn graph_fingerprint(graph: &Graph) -> String {
    let mut h = Sha256::new();
    h.update((graph.num_nodes() as u64).to_le_bytes());
    h.update((graph.feature_dim() as u64).to_le_bytes());
    for &l in graph.labels() {
        h.update((l as u64).to_le_bytes());
    }
    for v in graph.features().data() {
        h.update(v.to_le_bytes());
    }
    for (u, v) in graph.edges() {
        h.update((u as u64).to_le_bytes());
        h.update((v as u64).to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Fraction of `nodes` whose inference prediction on `graph` matches the label.
pub fn accuracy(model: &impl LogitModel, graph: &Graph, nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Ok(0.0);
    }
    let logits = model.logits(graph.features(), &graph.adjacency_lists())?;
    let correct = nodes
        .iter()
        .filter(|&&v| logits.row_argmax(v) == graph.label(v))
        .count();
    Ok(correct as f64 / nodes.len() as f64)
}

/// Full-batch inductive training on `train_graph`; accuracy is then measured on
/// all of `train_graph` and on `eval_nodes` inside `eval_graph`.
pub fn train_gnn(
    config: &GnnConfig,
    train_graph: &Graph,
    eval_graph: &Graph,
    eval_nodes: &[usize],
) -> Result<TrainedGnn> {
    config.validate()?;
    if eval_graph.feature_dim() != train_graph.feature_dim() {
        return Err(Error::arg("train and eval graphs have different feature widths"));
    }
    if let Some(&v) = eval_nodes.iter().find(|&&v| v >= eval_graph.num_nodes()) {
        return Err(Error::arg(format!("eval node {v} out of range")));
    }
    let mut model = GnnModel::new(config, train_graph.feature_dim(), train_graph.num_classes())?;
    let prop = Propagation::new(&train_graph.adjacency_lists());
    let mut adam = AdamState::new(model.params(), config.learning_rate, config.weight_decay);
    let mut rng = rng_from_seed(derive_seed(config.seed, DROPOUT_STREAM));
    let all_rows: Vec<usize> = (0..train_graph.num_nodes()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let x = tape.input(train_graph.features().clone());
        let fwd = model.forward(&mut tape, x, &prop, Mode::Train(&mut rng))?;
        let loss = tape.softmax_cross_entropy(fwd.logits, train_graph.labels(), &all_rows)?;
        tape.ensure_finite(loss, &format!("GNN training epoch {epoch}"))?;
        loss_trace.push(tape.value(loss).item());
        let grads = tape.backward(loss)?.param_grads(&tape, model.params());
        adam.step(model.params_mut(), &grads).map_err(|e| match e {
            Error::Numeric { detail, .. } => Error::numeric(format!("GNN training epoch {epoch}"), detail),
            other => other,
        })?;
        model.update_running_stats(&fwd.batch_stats);
    }
    let train_accuracy = accuracy(&model, train_graph, &all_rows)?;
    let test_accuracy = accuracy(&model, eval_graph, eval_nodes)?;
    Ok(TrainedGnn {
        model,
        train_accuracy,
        test_accuracy,
        train_set_id: graph_fingerprint(train_graph),
        loss_trace,
    })
}
