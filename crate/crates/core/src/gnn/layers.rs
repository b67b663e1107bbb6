//! Message-passing layer forms. Each function records one layer on a tape.

use std::sync::Arc;

use crate::error::Result;
use crate::nn::{SparseMatrix, Tape, Var};

/// GIN's self-weighting term `(1 + eps)` is fixed with `eps = 0`.
pub const GIN_EPSILON: f64 = 0.0;

/// Fixed propagation operators derived from one input topology.
#[derive(Clone, Debug)]
pub struct Propagation {
    /// `D^-1/2 (A + I) D^-1/2`.
    pub gcn: Arc<SparseMatrix>,
    /// Row-normalized neighbor mean; rows of isolated nodes are empty.
    pub mean: Arc<SparseMatrix>,
    /// `A + (1 + eps) I`.
    pub sum_self: Arc<SparseMatrix>,
    /// Attention pattern: each node's neighbors plus itself.
    pub attention: Arc<SparseMatrix>,
}

impl Propagation {
    /// `adjacency` must be symmetric and free of self-loops.
    pub fn new(adjacency: &[Vec<usize>]) -> Self {
        let n = adjacency.len();
        let deg: Vec<f64> = adjacency.iter().map(|l| l.len() as f64 + 1.0).collect();
        let with_self = |i: usize| {
            let mut cols: Vec<usize> = adjacency[i].clone();
            cols.push(i);
            cols.sort_unstable();
            cols
        };
        let gcn = (0..n)
            .map(|i| {
                with_self(i)
                    .into_iter()
                    .map(|j| (j, 1.0 / (deg[i] * deg[j]).sqrt()))
                    .collect()
            })
            .collect();
        let mean = adjacency
            .iter()
            .map(|l| {
                let w = 1.0 / l.len().max(1) as f64;
                let mut cols = l.clone();
                cols.sort_unstable();
                cols.into_iter().map(|j| (j, w)).collect()
            })
            .collect();
        let sum_self = (0..n)
            .map(|i| {
                with_self(i)
                    .into_iter()
                    .map(|j| (j, if j == i { 1.0 + GIN_EPSILON } else { 1.0 }))
                    .collect()
            })
            .collect();
        let attention = (0..n)
            .map(|i| with_self(i).into_iter().map(|j| (j, 1.0)).collect())
            .collect();
        Self {
            gcn: Arc::new(SparseMatrix::from_rows(n, gcn)),
            mean: Arc::new(SparseMatrix::from_rows(n, mean)),
            sum_self: Arc::new(SparseMatrix::from_rows(n, sum_self)),
            attention: Arc::new(SparseMatrix::from_rows(n, attention)),
        }
    }
}

/// `Â X W + b`.
pub fn gcn_layer(tape: &mut Tape, x: Var, w: Var, b: Var, prop: &Propagation) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    let agg = tape.spmm(prop.gcn.clone(), xw)?;
    tape.add_bias(agg, b)
}

/// `X W_self + mean_N(X) W_neigh + b`.
pub fn sage_layer(tape: &mut Tape, x: Var, w_self: Var, w_neigh: Var, b: Var, prop: &Propagation) -> Result<Var> {
    let own = tape.matmul(x, w_self)?;
    let mean = tape.spmm(prop.mean.clone(), x)?;
    let neigh = tape.matmul(mean, w_neigh)?;
    let sum = tape.add(own, neigh)?;
    tape.add_bias(sum, b)
}

/// `MLP((1 + eps) x_i + sum_N x_j)` with a one-hidden-layer ReLU MLP.
pub fn gin_layer(tape: &mut Tape, x: Var, w1: Var, b1: Var, w2: Var, b2: Var, prop: &Propagation) -> Result<Var> {
    let agg = tape.spmm(prop.sum_self.clone(), x)?;
    let h = tape.matmul(agg, w1)?;
    let h = tape.add_bias(h, b1)?;
    let h = tape.relu(h);
    let h = tape.matmul(h, w2)?;
    tape.add_bias(h, b2)
}

/// One attention head: project with `w`, then attention-weighted neighborhood sum.
pub fn gat_head(tape: &mut Tape, x: Var, w: Var, a_src: Var, a_dst: Var, prop: &Propagation) -> Result<Var> {
    let h = tape.matmul(x, w)?;
    tape.gat_aggregate(h, a_src, a_dst, prop.attention.clone())
}

/// Multi-head attention layer; heads are concatenated (`concat`) or averaged.
pub fn gat_layer(
    tape: &mut Tape,
    x: Var,
    heads: &[(Var, Var, Var)],
    b: Var,
    concat: bool,
    prop: &Propagation,
) -> Result<Var> {
    let outs = heads
        .iter()
        .map(|&(w, s, d)| gat_head(tape, x, w, s, d, prop))
        .collect::<Result<Vec<_>>>()?;
    let combined = if outs.len() == 1 {
        outs[0]
    } else if concat {
        tape.concat_cols(&outs)?
    } else {
        let mut acc = outs[0];
        for &o in &outs[1..] {
            acc = tape.add(acc, o)?;
        }
        tape.scale(acc, 1.0 / outs.len() as f64)
    };
    tape.add_bias(combined, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gcn_operator_on_path() {
        let prop = Propagation::new(&[vec![1], vec![0, 2], vec![1]]);
        let d = prop.gcn.to_dense();
        // degrees with self loop: 2, 3, 2
        assert!((d.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((d.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((d.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.get(0, 2), 0.0);
    }

    #[test]
    fn isolated_node_operators() {
        let prop = Propagation::new(&[vec![]]);
        assert_eq!(prop.gcn.to_dense().item(), 1.0);
        assert_eq!(prop.mean.nnz(), 0);
        assert_eq!(prop.sum_self.to_dense().item(), 1.0);
    }
}
