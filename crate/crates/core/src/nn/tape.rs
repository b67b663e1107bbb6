//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value plus whatever it
//! needs for the backward sweep. Nodes are created in topological order, so the
//! backward pass is a single reverse scan.

#![allow(clippy::needless_range_loop)]

use std::sync::Arc;

use super::matrix::{softmax_row, Matrix};
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const GAT_NEGATIVE_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Elu(Var),
    Mask {
        x: Var,
        mask: Vec<f64>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    BatchNormFrozen {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    SpMM {
        x: Var,
        adj: Arc<SparseMatrix>,
    },
    GatAggregate {
        h: Var,
        a_src: Var,
        a_dst: Var,
        adj: Arc<SparseMatrix>,
        alpha: Vec<f64>,
        z: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        rows: Vec<usize>,
        probs: Vec<Vec<f64>>,
    },
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
    },
    Mse(Var, Var),
    WeightedSum {
        x: Var,
        weights: Matrix,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Elu(_) => "elu",
            Op::Mask { .. } => "dropout",
            Op::BatchNorm { .. } => "batchnorm",
            Op::BatchNormFrozen { .. } => "batchnorm_inference",
            Op::SpMM { .. } => "sparse_aggregate",
            Op::GatAggregate { .. } => "gat_aggregate",
            Op::ConcatCols(_) => "concat",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::BceWithLogits { .. } => "bce_with_logits",
            Op::Mse(..) => "mse",
            Op::WeightedSum { .. } => "weighted_sum",
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Batch statistics produced by a training-mode batch normalization.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased (n-1) variance, the quantity tracked by running statistics.
    pub var_unbiased: Vec<f64>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Handle of the `i`-th recorded node, if it exists.
    pub fn var_at(&self, i: usize) -> Option<Var> {
        (i < self.nodes.len()).then_some(Var(i))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    /// Registers trainable parameter number `id`.
    pub fn param(&mut self, id: usize, value: Matrix) -> Var {
        self.push(value, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::arg(format!("matmul shapes {:?} x {:?}", av.shape(), bv.shape())));
        }
        let out = av.matmul(bv);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a 1xC bias row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::arg(format!(
                "bias shape {:?} does not fit {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::arg(format!("add shapes {:?} vs {:?}", av.shape(), bv.shape())));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).scale(k);
        self.push(out, Op::Scale(x, k))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v < 0.0 { 0.0 } else { v });
        self.push(out, Op::Relu(x))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { v.exp_m1() });
        self.push(out, Op::Elu(x))
    }

    /// Elementwise multiplication by a constant mask (dropout keeps `1/(1-rate)`).
    pub fn mask(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let xv = self.value(x);
        if mask.len() != xv.data().len() {
            return Err(Error::arg("dropout mask length mismatch"));
        }
        let data = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Matrix::from_vec(xv.rows(), xv.cols(), data)?;
        Ok(self.push(out, Op::Mask { x, mask }))
    }

    /// Training-mode batch normalization over rows.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<(Var, BatchStats)> {
        let xv = self.value(x);
        let (n, c) = xv.shape();
        if n < 2 {
            return Err(Error::numeric(
                "batchnorm",
                format!("training-mode batch has {n} row(s); at least 2 are needed for a variance"),
            ));
        }
        self.check_affine_shapes(xv.cols(), gamma, beta)?;
        let mut mean = vec![0.0; c];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(xv.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; c];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let var_unbiased: Vec<f64> = var.iter().map(|s| s / (n as f64 - 1.0)).collect();
        let inv_std: Vec<f64> = var
            .iter()
            .map(|s| 1.0 / (s / n as f64 + BATCHNORM_EPS).sqrt())
            .collect();
        let (out, xhat) = self.normalize(x, gamma, beta, &mean, &inv_std);
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        );
        Ok((v, BatchStats { mean, var_unbiased }))
    }

    /// Inference-mode batch normalization with fixed statistics.
    pub fn batch_norm_frozen(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
    ) -> Result<Var> {
        let c = self.value(x).cols();
        self.check_affine_shapes(c, gamma, beta)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::arg("running statistics width mismatch"));
        }
        let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + BATCHNORM_EPS).sqrt()).collect();
        let (out, xhat) = self.normalize(x, gamma, beta, running_mean, &inv_std);
        Ok(self.push(
            out,
            Op::BatchNormFrozen {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    fn check_affine_shapes(&self, c: usize, gamma: Var, beta: Var) -> Result<()> {
        for v in [gamma, beta] {
            if self.value(v).shape() != (1, c) {
                return Err(Error::arg(format!(
                    "batchnorm affine parameter shape {:?}, expected (1, {c})",
                    self.value(v).shape()
                )));
            }
        }
        Ok(())
    }

    fn normalize(&self, x: Var, gamma: Var, beta: Var, mean: &[f64], inv_std: &[f64]) -> (Matrix, Matrix) {
        let xv = self.value(x);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = xv.clone();
        let mut out = xv.clone();
        for r in 0..xv.rows() {
            for j in 0..xv.cols() {
                let h = (xv.get(r, j) - mean[j]) * inv_std[j];
                xhat.set(r, j, h);
                out.set(r, j, g[j] * h + b[j]);
            }
        }
        (out, xhat)
    }

    /// `adj * x` for a fixed sparse operator.
    pub fn spmm(&mut self, adj: Arc<SparseMatrix>, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if adj.cols() != xv.rows() {
            return Err(Error::arg(format!(
                "propagation operator has {} columns, features have {} rows",
                adj.cols(),
                xv.rows()
            )));
        }
        let out = adj.mul_dense(xv);
        Ok(self.push(out, Op::SpMM { x, adj }))
    }

    /// Single-head graph attention aggregation.
    ///
    /// `adj` row `i` lists the nodes `i` attends to (its own index included).
    /// Scores are `LeakyReLU(h_i . a_dst + h_j . a_src)`, normalized by a softmax
    /// over the row, and the output row is the attention-weighted sum of `h_j`.
    pub fn gat_aggregate(&mut self, h: Var, a_src: Var, a_dst: Var, adj: Arc<SparseMatrix>) -> Result<Var> {
        let (alpha, z, out) = {
            let hv = self.value(h);
            let (n, d) = hv.shape();
            if adj.rows() != n || adj.cols() != n {
                return Err(Error::arg("attention structure does not match node count"));
            }
            for a in [a_src, a_dst] {
                if self.value(a).shape() != (1, d) {
                    return Err(Error::arg("attention vector width mismatch"));
                }
            }
            let asrc = self.value(a_src).data();
            let adst = self.value(a_dst).data();
            let s_src: Vec<f64> = (0..n).map(|j| super::matrix::dot(hv.row(j), asrc)).collect();
            let s_dst: Vec<f64> = (0..n).map(|i| super::matrix::dot(hv.row(i), adst)).collect();
            let mut alpha = vec![0.0; adj.nnz()];
            let mut z = vec![0.0; adj.nnz()];
            let mut out = Matrix::zeros(n, d);
            for i in 0..n {
                let range = adj.row_range(i);
                if range.is_empty() {
                    continue;
                }
                let scores: Vec<f64> = range
                    .clone()
                    .map(|k| {
                        let zz = s_dst[i] + s_src[adj.indices()[k]];
                        z[k] = zz;
                        leaky_relu(zz)
                    })
                    .collect();
                let weights = softmax_row(&scores);
                for (k, w) in range.zip(weights) {
                    alpha[k] = w;
                    let j = adj.indices()[k];
                    let hj = hv.row(j).to_vec();
                    for (o, v) in out.row_mut(i).iter_mut().zip(hj) {
                        *o += w * v;
                    }
                }
            }
            (alpha, z, out)
        };
        Ok(self.push(
            out,
            Op::GatAggregate {
                h,
                a_src,
                a_dst,
                adj,
                alpha,
                z,
            },
        ))
    }

    /// Attention weights computed by a `gat_aggregate` node, in operator entry order.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::GatAggregate { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::hcat(&values)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Mean softmax cross-entropy over the selected `rows`, `targets[r]` being the class of row `r`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize], rows: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if targets.len() != lv.rows() {
            return Err(Error::arg(format!(
                "{} targets for {} logit rows",
                targets.len(),
                lv.rows()
            )));
        }
        if rows.is_empty() {
            return Err(Error::arg("cross-entropy over an empty row set"));
        }
        let mut loss = 0.0;
        let mut probs = Vec::with_capacity(rows.len());
        for &r in rows {
            let t = targets[r];
            if t >= lv.cols() {
                return Err(Error::arg(format!("target class {t} out of range")));
            }
            let p = softmax_row(lv.row(r));
            let max = lv.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + lv.row(r).iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - lv.get(r, t);
            probs.push(p);
        }
        loss /= rows.len() as f64;
        Ok(self.push(
            Matrix::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                rows: rows.to_vec(),
                probs,
            },
        ))
    }

    /// Mean binary cross-entropy on an n x 1 column of logits.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.cols() != 1 || lv.rows() != targets.len() || targets.is_empty() {
            return Err(Error::arg(format!(
                "bce expects an n x 1 logit column matching {} targets, got {:?}",
                targets.len(),
                lv.shape()
            )));
        }
        let n = targets.len() as f64;
        let loss = lv
            .data()
            .iter()
            .zip(targets)
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        Ok(self.push(
            Matrix::scalar(loss),
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::arg("mse shape mismatch"));
        }
        let n = av.data().len().max(1) as f64;
        let loss = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        Ok(self.push(Matrix::scalar(loss), Op::Mse(a, b)))
    }

    /// `sum(x * weights)`, a scalar probe used for gradient checks.
    pub fn weighted_sum(&mut self, x: Var, weights: Matrix) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != weights.shape() {
            return Err(Error::arg("weighted_sum shape mismatch"));
        }
        let s = xv.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        Ok(self.push(Matrix::scalar(s), Op::WeightedSum { x, weights }))
    }

    /// Fails with a numeric error naming the first node that holds a non-finite value.
    pub fn ensure_finite(&self, v: Var, context: &str) -> Result<()> {
        if self.value(v).is_finite() {
            return Ok(());
        }
        let culprit = self
            .nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| format!("first non-finite value at node {i} ({})", n.op.name()))
            .unwrap_or_else(|| "non-finite output".to_string());
        Err(Error::numeric(context, culprit))
    }

    /// Back-propagates from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::arg("backward needs a scalar loss"));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let ga = g.matmul_t(self.value(*b));
                let gb = self.value(*a).t_matmul(g);
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::AddBias(x, b) => {
                accumulate(grads, *x, g.clone());
                accumulate(grads, *b, g.column_sums());
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Scale(x, k) => accumulate(grads, *x, g.scale(*k)),
            Op::Relu(x) => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(gv, v)| if *v > 0.0 { *gv } else { 0.0 })
                    .collect();
                accumulate(grads, *x, Matrix::from_vec(g.rows(), g.cols(), data).unwrap());
            }
            Op::Elu(x) => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(gv, v)| if *v > 0.0 { *gv } else { gv * v.exp() })
                    .collect();
                accumulate(grads, *x, Matrix::from_vec(g.rows(), g.cols(), data).unwrap());
            }
            Op::Mask { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(a, m)| a * m).collect();
                accumulate(grads, *x, Matrix::from_vec(g.rows(), g.cols(), data).unwrap());
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (n, c) = g.shape();
                let gam = self.value(*gamma).data();
                let mut dgamma = Matrix::zeros(1, c);
                let mut dbeta = Matrix::zeros(1, c);
                let mut dx = Matrix::zeros(n, c);
                for j in 0..c {
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for r in 0..n {
                        let d = g.get(r, j) * gam[j];
                        sum_d += d;
                        sum_dx += d * xhat.get(r, j);
                        dgamma.data_mut()[j] += g.get(r, j) * xhat.get(r, j);
                        dbeta.data_mut()[j] += g.get(r, j);
                    }
                    let nf = n as f64;
                    for r in 0..n {
                        let d = g.get(r, j) * gam[j];
                        dx.set(r, j, inv_std[j] / nf * (nf * d - sum_d - xhat.get(r, j) * sum_dx));
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, dgamma);
                accumulate(grads, *beta, dbeta);
            }
            Op::BatchNormFrozen {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (n, c) = g.shape();
                let gam = self.value(*gamma).data();
                let mut dgamma = Matrix::zeros(1, c);
                let mut dx = Matrix::zeros(n, c);
                for r in 0..n {
                    for j in 0..c {
                        dgamma.data_mut()[j] += g.get(r, j) * xhat.get(r, j);
                        dx.set(r, j, g.get(r, j) * gam[j] * inv_std[j]);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, dgamma);
                accumulate(grads, *beta, g.column_sums());
            }
            Op::SpMM { x, adj } => accumulate(grads, *x, adj.t_mul_dense(g)),
            Op::GatAggregate {
                h,
                a_src,
                a_dst,
                adj,
                alpha,
                z,
            } => {
                let hv = self.value(*h);
                let (n, d) = hv.shape();
                let asrc = self.value(*a_src).data();
                let adst = self.value(*a_dst).data();
                let mut dh = Matrix::zeros(n, d);
                let mut ds_src = vec![0.0; n];
                let mut ds_dst = vec![0.0; n];
                for i in 0..n {
                    let range = adj.row_range(i);
                    let gi = g.row(i);
                    // d out_i / d alpha_ij = g_i . h_j
                    let dalpha: Vec<f64> = range
                        .clone()
                        .map(|k| super::matrix::dot(gi, hv.row(adj.indices()[k])))
                        .collect();
                    let weighted: f64 = range.clone().zip(&dalpha).map(|(k, da)| alpha[k] * da).sum();
                    for (k, da) in range.zip(dalpha) {
                        let j = adj.indices()[k];
                        let gi_scaled: Vec<f64> = gi.iter().map(|v| alpha[k] * v).collect();
                        for (o, v) in dh.row_mut(j).iter_mut().zip(gi_scaled) {
                            *o += v;
                        }
                        let de = alpha[k] * (da - weighted);
                        let dz = de * leaky_relu_grad(z[k]);
                        ds_dst[i] += dz;
                        ds_src[j] += dz;
                    }
                }
                let mut da_src = Matrix::zeros(1, d);
                let mut da_dst = Matrix::zeros(1, d);
                for r in 0..n {
                    let hr = hv.row(r).to_vec();
                    for c in 0..d {
                        da_src.data_mut()[c] += ds_src[r] * hr[c];
                        da_dst.data_mut()[c] += ds_dst[r] * hr[c];
                    }
                    let row = dh.row_mut(r);
                    for c in 0..d {
                        row[c] += ds_src[r] * asrc[c] + ds_dst[r] * adst[c];
                    }
                }
                accumulate(grads, *h, dh);
                accumulate(grads, *a_src, da_src);
                accumulate(grads, *a_dst, da_dst);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut gp = Matrix::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    offset += w;
                    accumulate(grads, p, gp);
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                rows,
                probs,
            } => {
                let lv = self.value(*logits);
                let scale = g.item() / rows.len() as f64;
                let mut gl = Matrix::zeros(lv.rows(), lv.cols());
                for (&r, p) in rows.iter().zip(probs) {
                    let row = gl.row_mut(r);
                    for (o, pv) in row.iter_mut().zip(p) {
                        *o += scale * pv;
                    }
                    row[targets[r]] -= scale;
                }
                accumulate(grads, *logits, gl);
            }
            Op::BceWithLogits { logits, targets } => {
                let lv = self.value(*logits);
                let scale = g.item() / targets.len() as f64;
                let data = lv
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&x, &y)| scale * (sigmoid(x) - y))
                    .collect();
                accumulate(grads, *logits, Matrix::from_vec(lv.rows(), 1, data).unwrap());
            }
            Op::Mse(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let scale = 2.0 * g.item() / av.data().len().max(1) as f64;
                let data: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| scale * (x - y)).collect();
                let ga = Matrix::from_vec(av.rows(), av.cols(), data).unwrap();
                accumulate(grads, *b, ga.scale(-1.0));
                accumulate(grads, *a, ga);
            }
            Op::WeightedSum { x, weights } => accumulate(grads, *x, weights.scale(g.item())),
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
fn leaky_relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        GAT_NEGATIVE_SLOPE * z
    }
}

#[inline]
fn leaky_relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        GAT_NEGATIVE_SLOPE
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of a backward sweep.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of every parameter registered on `tape`, zeros where a
    /// parameter did not influence the loss. `params` supplies the shapes.
    pub fn param_grads(&self, tape: &Tape, params: &[Matrix]) -> Vec<Matrix> {
        let mut out: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        for (i, node) in tape.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &self.grads[i]) {
                out[*id].add_assign(g);
            }
        }
        out
    }
}
