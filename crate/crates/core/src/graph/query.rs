use super::Graph;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// The payload an adversary sends to a model: a (possibly perturbed) center row,
/// its neighbors' rows and a star of center-neighbor edges.
///
/// Local ordering is `[center, neighbor_0, neighbor_1, ...]`; every edge is
/// `(0, k)` for some neighbor `k >= 1`. Neighbor-to-neighbor edges never appear.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphQuery {
    center_features: Vec<f64>,
    neighbor_features: Vec<Vec<f64>>,
    edges: Vec<(usize, usize)>,
}

impl SubgraphQuery {
    /// The 0-hop query: the center alone.
    pub fn isolated(center_features: Vec<f64>) -> Self {
        Self {
            center_features,
            neighbor_features: Vec::new(),
            edges: Vec::new(),
        }
    }

    /// Validates a star query. `connected` lists the neighbor positions (0-based
    /// within `neighbor_features`) that keep their edge to the center.
    pub fn star(center_features: Vec<f64>, neighbor_features: Vec<Vec<f64>>, connected: &[usize]) -> Result<Self> {
        let dim = center_features.len();
        if let Some(i) = neighbor_features.iter().position(|r| r.len() != dim) {
            return Err(Error::arg(format!(
                "neighbor row {i} has {} features, center has {dim}",
                neighbor_features[i].len()
            )));
        }
        let mut edges = Vec::with_capacity(connected.len());
        for &k in connected {
            if k >= neighbor_features.len() {
                return Err(Error::arg(format!("edge to neighbor {k} which is not in the payload")));
            }
            edges.push((0, k + 1));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            center_features,
            neighbor_features,
            edges,
        })
    }

    pub fn center_features(&self) -> &[f64] {
        &self.center_features
    }

    pub fn neighbor_features(&self) -> &[Vec<f64>] {
        &self.neighbor_features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        1 + self.neighbor_features.len()
    }

    /// Same payload with a subset of the star edges.
    pub fn with_connected(&self, connected: &[usize]) -> Result<Self> {
        Self::star(self.center_features.clone(), self.neighbor_features.clone(), connected)
    }

    /// Feature matrix in local order.
    pub fn feature_matrix(&self) -> Matrix {
        let dim = self.center_features.len();
        let mut data = Vec::with_capacity(self.node_count() * dim);
        data.extend_from_slice(&self.center_features);
        for r in &self.neighbor_features {
            data.extend_from_slice(r);
        }
        Matrix::from_vec(self.node_count(), dim, data).expect("rows validated on construction")
    }

    /// Symmetric adjacency lists in local order.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }
}

/// Star query around `node` with all of its 1-hop neighbors (ascending) attached.
pub fn build_1hop_query(graph: &Graph, node: usize, center_features_override: Option<&[f64]>) -> Result<SubgraphQuery> {
    let neighbors = graph.khop_neighbors(node, 1)?;
    let center = match center_features_override {
        Some(row) if row.len() != graph.feature_dim() => {
            return Err(Error::arg(format!(
                "override row has {} features, graph has {}",
                row.len(),
                graph.feature_dim()
            )))
        }
        Some(row) => row.to_vec(),
        None => graph.feature_row(node).to_vec(),
    };
    let rows = neighbors.iter().map(|&v| graph.feature_row(v).to_vec()).collect();
    let all: Vec<usize> = (0..neighbors.len()).collect();
    SubgraphQuery::star(center, rows, &all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Graph {
        let feats = Matrix::from_vec(5, 2, (0..10).map(f64::from).collect()).unwrap();
        Graph::new(feats, vec![0; 5], 1, &[(0, 1), (0, 2), (0, 3), (1, 2)]).unwrap()
    }

    #[test]
    fn degree_three_star() {
        let q = build_1hop_query(&sample(), 0, None).unwrap();
        assert_eq!(q.neighbor_features().len(), 3);
        assert_eq!(q.edges(), &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(q.neighbor_features()[0], vec![2.0, 3.0]);
    }

    #[test]
    fn isolated_node_is_zero_hop() {
        let q = build_1hop_query(&sample(), 4, None).unwrap();
        assert_eq!(q, SubgraphQuery::isolated(vec![8.0, 9.0]));
    }

    #[test]
    fn override_replaces_only_center() {
        let g = sample();
        let base = build_1hop_query(&g, 0, None).unwrap();
        let q = build_1hop_query(&g, 0, Some(&[0.0, 0.0])).unwrap();
        assert_eq!(q.center_features(), &[0.0, 0.0]);
        assert_eq!(q.neighbor_features(), base.neighbor_features());
        assert!(build_1hop_query(&g, 0, Some(&[0.0])).is_err());
    }

    #[test]
    fn lateral_edges_are_excluded() {
        // nodes 1 and 2 are adjacent in the graph but the query is a star
        let q = build_1hop_query(&sample(), 0, None).unwrap();
        let adj = q.adjacency_lists();
        assert_eq!(adj[1], vec![0]);
        assert_eq!(adj[2], vec![0]);
    }
}
