//! Undirected attributed graphs, neighborhoods and the query/oracle types that
//! encode what an adversary may send to and receive from a model.

mod oracle;
mod query;

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub use oracle::{LabelOracle, LogitModel, ModelLabelOracle, ModelPosteriorOracle, PosteriorOracle, QueryCounter};
pub use query::{build_1hop_query, SubgraphQuery};

/// Immutable node-attributed undirected graph in CSR form.
///
/// Neighbor lists are sorted, duplicate free and never contain the node itself.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_classes: usize,
    features: Matrix,
    labels: Vec<usize>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Graph {
    /// Builds a graph from an edge list. Edges are symmetrized and deduplicated;
    /// self-loops are dropped.
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::arg(format!("{} labels for {n} feature rows", labels.len())));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::arg(format!(
                "label {l} of node {i} is not below num_classes={num_classes}"
            )));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::arg(format!("edge ({u}, {v}) references a node >= {n}")));
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        Ok(Self::from_adjacency(features, labels, num_classes, adj))
    }

    fn from_adjacency(features: Matrix, labels: Vec<usize>, num_classes: usize, mut adj: Vec<Vec<usize>>) -> Self {
        let mut indptr = Vec::with_capacity(adj.len() + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            indices.extend_from_slice(list);
            indptr.push(indices.len());
        }
        Self {
            num_classes,
            features,
            labels,
            indptr,
            indices,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_row(&self, node: usize) -> &[f64] {
        self.features.row(node)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> usize {
        self.labels[node]
    }

    /// Sorted neighbor list of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.indices[self.indptr[node]..self.indptr[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.indptr[node + 1] - self.indptr[node]
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes() {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        (0..self.num_nodes()).map(|u| self.neighbors(u).to_vec()).collect()
    }

    /// Per-class node counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.num_nodes() {
            return Err(Error::arg(format!(
                "node {node} out of range for a graph with {} nodes",
                self.num_nodes()
            )));
        }
        Ok(())
    }

    /// Nodes at shortest-path distance `1..=hops` from `node`, ascending.
    pub fn khop_neighbors(&self, node: usize, hops: usize) -> Result<Vec<usize>> {
        self.check_node(node)?;
        if hops == 0 {
            return Err(Error::arg("hop count must be at least 1"));
        }
        let mut dist: HashMap<usize, usize> = HashMap::new();
        dist.insert(node, 0);
        let mut queue = VecDeque::from([node]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            if d == hops {
                continue;
            }
            for &v in self.neighbors(u) {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(v) {
                    e.insert(d + 1);
                    queue.push_back(v);
                }
            }
        }
        let mut out: Vec<usize> = dist.into_keys().filter(|&v| v != node).collect();
        out.sort_unstable();
        Ok(out)
    }

    /// Subgraph over `nodes` keeping exactly the edges with both endpoints inside.
    /// New indices follow ascending original index order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<InducedSubgraph> {
        let mut keep: Vec<usize> = nodes.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep.is_empty() {
            return Err(Error::arg("induced subgraph over an empty node set"));
        }
        if let Some(&bad) = keep.iter().find(|&&v| v >= self.num_nodes()) {
            return Err(Error::arg(format!("node {bad} out of range")));
        }
        let old_to_new: HashMap<usize, usize> = keep.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let adj: Vec<Vec<usize>> = keep
            .iter()
            .map(|&u| {
                self.neighbors(u)
                    .iter()
                    .filter_map(|v| old_to_new.get(v).copied())
                    .collect()
            })
            .collect();
        let graph = Graph::from_adjacency(
            self.features.select_rows(&keep),
            keep.iter().map(|&v| self.labels[v]).collect(),
            self.num_classes,
            adj,
        );
        Ok(InducedSubgraph {
            graph,
            new_to_old: keep,
            old_to_new,
        })
    }

    /// Copy of this graph with new feature values (same shape and structure).
    pub fn with_features(&self, features: Matrix) -> Result<Graph> {
        if features.shape() != self.features.shape() {
            return Err(Error::arg("replacement features must keep the original shape"));
        }
        Ok(Graph {
            features,
            ..self.clone()
        })
    }
}

/// A graph restricted to a node subset, with the index maps between the two.
#[derive(Clone, Debug)]
pub struct InducedSubgraph {
    pub graph: Graph,
    /// `new_to_old[i]` is the original index of subgraph node `i`.
    pub new_to_old: Vec<usize>,
    pub old_to_new: HashMap<usize, usize>,
}

impl InducedSubgraph {
    pub fn to_new(&self, old: usize) -> Option<usize> {
        self.old_to_new.get(&old).copied()
    }
}
