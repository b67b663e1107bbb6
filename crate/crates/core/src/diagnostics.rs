//! Self-checks that exercise every differentiable building block on random
//! small instances and compare against central finite differences.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::gnn::layers::{gat_layer, gcn_layer, gin_layer, sage_layer, Propagation};
use crate::nn::gradcheck::{check_gradients, GradCheckReport};
use crate::nn::{Matrix, Tape, Var};
use crate::rng::{derive_seed, rng_from_seed, Rng};

pub const FD_STEP: f64 = 1e-5;

/// Building blocks covered by [`gradient_suite`].
pub const LAYER_KINDS: &[&str] = &[
    "linear",
    "batchnorm_train",
    "batchnorm_inference",
    "dropout_off",
    "dropout_mask",
    "relu",
    "elu",
    "gcn",
    "gat",
    "graphsage",
    "gin",
    "jk_concat",
    "softmax_cross_entropy",
    "bce_with_logits",
];

#[derive(Clone, Debug)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub trials: usize,
    pub max_relative_error: f64,
}

fn normal(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

fn random_adjacency(n: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < 0.4 {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
    }
    adj
}

fn probe(tape: &mut Tape, out: Var, rng: &mut Rng) -> Result<Var> {
    let (r, c) = tape.value(out).shape();
    tape.weighted_sum(out, normal(r, c, rng))
}

/// One random instance of `layer`, checked by finite differences.
pub fn check_layer(layer: &str, seed: u64) -> Result<GradCheckReport> {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(2..=8);
    let d_in = rng.random_range(1..=8);
    let d_out = rng.random_range(1..=8);
    let probe_seed = rng.random::<u64>();
    let probe_rng = || rng_from_seed(probe_seed);
    match layer {
        "linear" => {
            let inputs = [
                normal(n, d_in, &mut rng),
                normal(d_in, d_out, &mut rng),
                normal(1, d_out, &mut rng),
            ];
            check_gradients(&inputs, FD_STEP, |t, v| {
                let z = t.matmul(v[0], v[1])?;
                let z = t.add_bias(z, v[2])?;
                probe(t, z, &mut probe_rng())
            })
        }
        "batchnorm_train" => {
            let inputs = [
                normal(n, d_in, &mut rng),
                normal(1, d_in, &mut rng),
                normal(1, d_in, &mut rng),
            ];
            check_gradients(&inputs, FD_STEP, |t, v| {
                let (z, _) = t.batch_norm(v[0], v[1], v[2])?;
                probe(t, z, &mut probe_rng())
            })
        }
        "batchnorm_inference" => {
            let mean: Vec<f64> = (0..d_in).map(|_| StandardNormal.sample(&mut rng)).collect();
            let var: Vec<f64> = (0..d_in).map(|_| rng.random_range(0.1..2.0)).collect();
            let inputs = [
                normal(n, d_in, &mut rng),
                normal(1, d_in, &mut rng),
                normal(1, d_in, &mut rng),
            ];
            check_gradients(&inputs, FD_STEP, |t, v| {
                let z = t.batch_norm_frozen(v[0], v[1], v[2], &mean, &var)?;
                probe(t, z, &mut probe_rng())
            })
        }
        "dropout_off" => {
            let inputs = [normal(n, d_in, &mut rng)];
            check_gradients(&inputs, FD_STEP, |t, v| {
                let z = t.mask(v[0], vec![1.0; n * d_in])?;
                probe(t, z, &mut probe_rng())
            })
        }
        "dropout_mask" => {
            let mask = crate::nn::dropout::dropout_mask(n * d_in, 0.5, &mut rng)?;
            let inputs = [normal(n, d_in, &mut rng)];
            check_gradients(&inputs, FD_STEP, |t, v| {
                let z = t.mask(v[0], mask.clone())?;
                probe(t, z, &mut probe_rng())
            })
        }
        "relu" | "elu" => {
            let inputs = [normal(n, d_in, &mut rng)];
            let elu = layer == "elu";
            check_gradients(&inputs, FD_STEP, |t, v| {
                let z = if elu { t.elu(v[0]) } else { t.relu(v[0]) };
                probe(t, z, &mut probe_rng())
            })
        }
        "gcn" => {
            let prop = Propagation::new(&random_adjacency(n, &mut rng));
            let inputs = [
                normal(n, d_in, &mut rng),
                normal(d_in, d_out, &mut rng),
                normal(1, d_out, &mut rng),
            ];
            check_gradients(&inputs, FD_STEP, |t, v| {
                let z = gcn_layer(t, v[0], v[1], v[2], &prop)?;
                probe(t, z, &mut probe_rng())
            })
        }
        "graphsage" => {
            let prop = Propagation::new(&random_adjacency(n, &mut rng));
            let inputs = [
                normal(n, d_in, &mut rng),
                normal(d_in, d_out, &mut rng),
                normal(d_in, d_out, &mut rng),
                normal(1, d_out, &mut rng),
            ];
            check_gradients(&inputs, FD_STEP, |t, v| {
                let z = sage_layer(t, v[0], v[1], v[2], v[3], &prop)?;
                probe(t, z, &mut probe_rng())
            })
        }
        "gin" => {
            let prop = Propagation::new(&random_adjacency(n, &mut rng));
            let hidden = rng.random_range(1..=8);
            let inputs = [
                normal(n, d_in, &mut rng),
                normal(d_in, hidden, &mut rng),
                normal(1, hidden, &mut rng),
                normal(hidden, d_out, &mut rng),
                normal(1, d_out, &mut rng),
            ];
            check_gradients(&inputs, FD_STEP, |t, v| {
                let z = gin_layer(t, v[0], v[1], v[2], v[3], v[4], &prop)?;
                probe(t, z, &mut probe_rng())
            })
        }
        "gat" => {
            let prop = Propagation::new(&random_adjacency(n, &mut rng));
            let heads = rng.random_range(1..=2);
            let concat = rng.random::<bool>();
            let mut inputs = vec![normal(n, d_in, &mut rng)];
            for _ in 0..heads {
                inputs.push(normal(d_in, d_out, &mut rng));
                inputs.push(normal(1, d_out, &mut rng));
                inputs.push(normal(1, d_out, &mut rng));
            }
            let width = if concat { d_out * heads } else { d_out };
            inputs.push(normal(1, width, &mut rng));
            check_gradients(&inputs, FD_STEP, |t, v| {
                let hs: Vec<(Var, Var, Var)> = (0..heads).map(|h| (v[1 + 3 * h], v[2 + 3 * h], v[3 + 3 * h])).collect();
                let z = gat_layer(t, v[0], &hs, v[v.len() - 1], concat, &prop)?;
                probe(t, z, &mut probe_rng())
            })
        }
        "jk_concat" => {
            let widths: Vec<usize> = (0..3).map(|_| rng.random_range(1..=4)).collect();
            let total: usize = widths.iter().sum();
            let mut inputs: Vec<Matrix> = widths.iter().map(|&w| normal(n, w, &mut rng)).collect();
            inputs.push(normal(total, d_out, &mut rng));
            check_gradients(&inputs, FD_STEP, |t, v| {
                let cat = t.concat_cols(&v[..3])?;
                let z = t.matmul(cat, v[3])?;
                probe(t, z, &mut probe_rng())
            })
        }
        "softmax_cross_entropy" => {
            let classes = rng.random_range(2..=8);
            let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
            let rows: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.7).collect();
            let rows = if rows.is_empty() { vec![0] } else { rows };
            let inputs = [normal(n, classes, &mut rng)];
            check_gradients(&inputs, FD_STEP, |t, v| t.softmax_cross_entropy(v[0], &targets, &rows))
        }
        "bce_with_logits" => {
            let targets: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..2u8))).collect();
            let inputs = [normal(n, 1, &mut rng).scale(3.0)];
            check_gradients(&inputs, FD_STEP, |t, v| t.bce_with_logits(v[0], &targets))
        }
        other => Err(crate::Error::arg(format!("unknown layer kind {other:?}"))),
    }
}

/// Runs `trials` seeded instances of every kind in [`LAYER_KINDS`].
pub fn gradient_suite(trials: usize, seed: u64) -> Result<Vec<LayerCheck>> {
    LAYER_KINDS
        .iter()
        .enumerate()
        .map(|(k, &layer)| {
            let mut worst: f64 = 0.0;
            for trial in 0..trials {
                let report = check_layer(layer, derive_seed(derive_seed(seed, k as u64), trial as u64))?;
                worst = worst.max(report.max_relative_error);
            }
            Ok(LayerCheck {
                layer,
                trials,
                max_relative_error: worst,
            })
        })
        .collect()
}
