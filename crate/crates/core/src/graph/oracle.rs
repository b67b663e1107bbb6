use std::sync::atomic::{AtomicU64, Ordering};

use super::{Graph, SubgraphQuery};
use crate::error::Result;
use crate::nn::matrix::softmax_rows;
use crate::nn::Matrix;

/// Anything that maps a node-attributed graph to per-node class logits.
pub trait LogitModel: Sync {
    fn num_classes(&self) -> usize;

    /// Logits for every node of the payload, rows in input order.
    /// `adjacency` is symmetric, without self-loops.
    fn logits(&self, features: &Matrix, adjacency: &[Vec<usize>]) -> Result<Matrix>;
}

impl<T: LogitModel + ?Sized> LogitModel for &T {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn logits(&self, features: &Matrix, adjacency: &[Vec<usize>]) -> Result<Matrix> {
        (**self).logits(features, adjacency)
    }
}

/// Label-only access: one class index per payload node and nothing else.
pub trait LabelOracle: Sync {
    fn query(&self, query: &SubgraphQuery) -> Result<Vec<usize>>;

    fn queries_issued(&self) -> u64;
}

/// Probability access, only used by the posterior-based baselines.
pub trait PosteriorOracle: Sync {
    fn num_classes(&self) -> usize;

    fn query(&self, query: &SubgraphQuery) -> Result<Matrix>;

    /// Posterior rows for every node of an arbitrary graph payload.
    fn query_graph(&self, graph: &Graph) -> Result<Matrix>;

    fn queries_issued(&self) -> u64;
}

/// Thread-safe query counter.
#[derive(Debug, Default)]
pub struct QueryCounter(AtomicU64);

impl QueryCounter {
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Label oracle over a logit model: argmax per row, lowest index on ties.
pub struct ModelLabelOracle<M> {
    model: M,
    counter: QueryCounter,
}

impl<M: LogitModel> ModelLabelOracle<M> {
    pub fn new(model: M) -> Self {
        Self {
            model,
            counter: QueryCounter::default(),
        }
    }
}

impl<M: LogitModel> LabelOracle for ModelLabelOracle<M> {
    fn query(&self, query: &SubgraphQuery) -> Result<Vec<usize>> {
        self.counter.bump();
        let logits = self.model.logits(&query.feature_matrix(), &query.adjacency_lists())?;
        Ok((0..logits.rows()).map(|r| logits.row_argmax(r)).collect())
    }

    fn queries_issued(&self) -> u64 {
        self.counter.get()
    }
}

/// Posterior oracle over a logit model: softmax per row.
pub struct ModelPosteriorOracle<M> {
    model: M,
    counter: QueryCounter,
}

impl<M: LogitModel> ModelPosteriorOracle<M> {
    pub fn new(model: M) -> Self {
        Self {
            model,
            counter: QueryCounter::default(),
        }
    }
}

impl<M: LogitModel> PosteriorOracle for ModelPosteriorOracle<M> {
    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn query(&self, query: &SubgraphQuery) -> Result<Matrix> {
        self.counter.bump();
        let logits = self.model.logits(&query.feature_matrix(), &query.adjacency_lists())?;
        Ok(softmax_rows(&logits))
    }

    fn query_graph(&self, graph: &Graph) -> Result<Matrix> {
        self.counter.bump();
        let logits = self.model.logits(graph.features(), &graph.adjacency_lists())?;
        Ok(softmax_rows(&logits))
    }

    fn queries_issued(&self) -> u64 {
        self.counter.get()
    }
}
