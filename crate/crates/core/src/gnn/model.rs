use serde::{Deserialize, Serialize};

use super::config::{GnnConfig, GnnType};
use super::layers::{gat_layer, gcn_layer, gin_layer, sage_layer, Propagation};
use crate::error::{Error, Result};
use crate::graph::LogitModel;
use crate::nn::dropout::dropout_mask;
use crate::nn::init::glorot_uniform;
use crate::nn::tape::BatchStats;
use crate::nn::{Matrix, Tape, Var};
use crate::rng::{derive_seed, rng_from_seed, Rng};

const INIT_STREAM: u64 = 0x1417;

/// Parameter indices of one message-passing layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerParams {
    Gcn {
        w: usize,
        b: usize,
    },
    Sage {
        w_self: usize,
        w_neigh: usize,
        b: usize,
    },
    Gin {
        w1: usize,
        b1: usize,
        w2: usize,
        b2: usize,
    },
    Gat {
        heads: Vec<(usize, usize, usize)>,
        b: usize,
        concat: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub const BATCHNORM_MOMENTUM: f64 = 0.1;

/// Whether a forward pass trains (dropout active, batch statistics) or infers.
pub enum Mode<'a> {
    Train(&'a mut Rng),
    Eval,
}

/// Handles produced by one recorded forward pass.
pub struct Forward {
    pub logits: Var,
    /// Output of every message-passing layer after normalization/activation.
    pub layer_outputs: Vec<Var>,
    pub batch_stats: Vec<BatchStats>,
    pub attention: Vec<Var>,
}

/// A GNN's architecture together with its parameters and normalization state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    config: GnnConfig,
    input_dim: usize,
    num_classes: usize,
    layers: Vec<LayerParams>,
    /// `(gamma, beta)` per hidden layer when batch normalization is on.
    norms: Vec<(usize, usize)>,
    /// Dense output layer fed by the jumping-knowledge concatenation.
    head: Option<(usize, usize)>,
    param_names: Vec<String>,
    #[serde(skip)]
    params: Vec<Matrix>,
    #[serde(skip)]
    running: Vec<RunningStats>,
}

struct Builder<'a> {
    rng: &'a mut Rng,
    params: Vec<Matrix>,
    names: Vec<String>,
}

impl Builder<'_> {
    fn weight(&mut self, name: String, rows: usize, cols: usize) -> usize {
        self.params.push(glorot_uniform(rows, cols, self.rng));
        self.names.push(name);
        self.params.len() - 1
    }

    fn constant(&mut self, name: String, cols: usize, value: f64) -> usize {
        self.params.push(Matrix::filled(1, cols, value));
        self.names.push(name);
        self.params.len() - 1
    }
}

impl GnnModel {
    /// Freshly initialized model (Glorot-uniform weights, zero biases, seeded by `config.seed`).
    pub fn new(config: &GnnConfig, input_dim: usize, num_classes: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::arg("input_dim and num_classes must be positive"));
        }
        let mut rng = rng_from_seed(derive_seed(config.seed, INIT_STREAM));
        let mut b = Builder {
            rng: &mut rng,
            params: Vec::new(),
            names: Vec::new(),
        };
        let m = config.message_passing_layers();
        let heads = if config.gnn_type == GnnType::Gat {
            config.gat_heads
        } else {
            1
        };
        let jk = config.use_jumping_knowledge;
        let mut layers = Vec::with_capacity(m);
        let mut norms = Vec::new();
        let mut in_dim = input_dim;
        let mut hidden_widths = Vec::new();
        for l in 0..m {
            let is_output = !jk && l == m - 1;
            let out_dim = if is_output { num_classes } else { config.hidden_dim };
            let layer = match config.gnn_type {
                GnnType::Gcn => LayerParams::Gcn {
                    w: b.weight(format!("layer{l}.weight"), in_dim, out_dim),
                    b: b.constant(format!("layer{l}.bias"), out_dim, 0.0),
                },
                GnnType::GraphSage => LayerParams::Sage {
                    w_self: b.weight(format!("layer{l}.weight_self"), in_dim, out_dim),
                    w_neigh: b.weight(format!("layer{l}.weight_neigh"), in_dim, out_dim),
                    b: b.constant(format!("layer{l}.bias"), out_dim, 0.0),
                },
                GnnType::Gin => LayerParams::Gin {
                    w1: b.weight(format!("layer{l}.mlp0.weight"), in_dim, config.hidden_dim),
                    b1: b.constant(format!("layer{l}.mlp0.bias"), config.hidden_dim, 0.0),
                    w2: b.weight(format!("layer{l}.mlp1.weight"), config.hidden_dim, out_dim),
                    b2: b.constant(format!("layer{l}.mlp1.bias"), out_dim, 0.0),
                },
                GnnType::Gat => {
                    let hs = (0..heads)
                        .map(|h| {
                            (
                                b.weight(format!("layer{l}.head{h}.weight"), in_dim, out_dim),
                                b.weight(format!("layer{l}.head{h}.att_src"), 1, out_dim),
                                b.weight(format!("layer{l}.head{h}.att_dst"), 1, out_dim),
                            )
                        })
                        .collect();
                    let concat = !is_output;
                    let width = if concat { out_dim * heads } else { out_dim };
                    LayerParams::Gat {
                        heads: hs,
                        b: b.constant(format!("layer{l}.bias"), width, 0.0),
                        concat,
                    }
                }
            };
            let width = match &layer {
                LayerParams::Gat { concat: true, .. } => out_dim * heads,
                _ => out_dim,
            };
            if !is_output {
                if config.use_batchnorm {
                    norms.push((
                        b.constant(format!("layer{l}.norm.gamma"), width, 1.0),
                        b.constant(format!("layer{l}.norm.beta"), width, 0.0),
                    ));
                }
                hidden_widths.push(width);
            }
            layers.push(layer);
            in_dim = width;
        }
        let head = if jk {
            let concat: usize = hidden_widths.iter().sum();
            Some((
                b.weight("jk_head.weight".into(), concat, num_classes),
                b.constant("jk_head.bias".into(), num_classes, 0.0),
            ))
        } else {
            None
        };
        let running = hidden_widths
            .iter()
            .take(norms.len())
            .map(|&w| RunningStats {
                mean: vec![0.0; w],
                var: vec![1.0; w],
            })
            .collect();
        let (params, param_names) = (b.params, b.names);
        Ok(Self {
            config: config.clone(),
            input_dim,
            num_classes,
            layers,
            norms,
            head,
            param_names,
            params,
            running,
        })
    }

    pub fn config(&self) -> &GnnConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub(crate) fn restore_state(&mut self, params: Vec<Matrix>, running: Vec<RunningStats>) -> Result<()> {
        if params.len() != self.params.len() || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::arg("checkpoint parameters do not match the architecture"));
        }
        if running.len() != self.running.len()
            || running
                .iter()
                .zip(&self.running)
                .any(|(a, b)| a.mean.len() != b.mean.len() || a.var.len() != b.var.len())
        {
            return Err(Error::arg(
                "checkpoint normalization state does not match the architecture",
            ));
        }
        self.params = params;
        self.running = running;
        Ok(())
    }

    /// Folds training-batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &[BatchStats]) {
        for (run, batch) in self.running.iter_mut().zip(stats) {
            for (r, b) in run.mean.iter_mut().zip(&batch.mean) {
                *r = (1.0 - BATCHNORM_MOMENTUM) * *r + BATCHNORM_MOMENTUM * b;
            }
            for (r, b) in run.var.iter_mut().zip(&batch.var_unbiased) {
                *r = (1.0 - BATCHNORM_MOMENTUM) * *r + BATCHNORM_MOMENTUM * b;
            }
        }
    }

    /// Width of the jumping-knowledge concatenation, if enabled.
    pub fn jk_width(&self) -> Option<usize> {
        self.head.map(|(w, _)| self.params[w].rows())
    }

    /// Records a forward pass over `x` (one row per node) with topology `prop`.
    pub fn forward(&self, tape: &mut Tape, x: Var, prop: &Propagation, mut mode: Mode<'_>) -> Result<Forward> {
        if tape.value(x).cols() != self.input_dim {
            return Err(Error::arg(format!(
                "model expects {} input features, got {}",
                self.input_dim,
                tape.value(x).cols()
            )));
        }
        let vars: Vec<Var> = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param(i, p.clone()))
            .collect();
        let jk = self.head.is_some();
        let m = self.layers.len();
        let act_elu = self.config.gnn_type == GnnType::Gat;
        let mut h = x;
        let mut outputs = Vec::with_capacity(m);
        let mut batch_stats = Vec::new();
        let mut attention = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            h = self.maybe_dropout(tape, h, &mut mode)?;
            h = match layer {
                LayerParams::Gcn { w, b } => gcn_layer(tape, h, vars[*w], vars[*b], prop)?,
                LayerParams::Sage { w_self, w_neigh, b } => {
                    sage_layer(tape, h, vars[*w_self], vars[*w_neigh], vars[*b], prop)?
                }
                LayerParams::Gin { w1, b1, w2, b2 } => {
                    gin_layer(tape, h, vars[*w1], vars[*b1], vars[*w2], vars[*b2], prop)?
                }
                LayerParams::Gat { heads, b, concat } => {
                    let hv: Vec<(Var, Var, Var)> = heads.iter().map(|&(w, s, d)| (vars[w], vars[s], vars[d])).collect();
                    let before = tape.len();
                    let out = gat_layer(tape, h, &hv, vars[*b], *concat, prop)?;
                    attention.extend(
                        (before..tape.len())
                            .filter_map(|i| tape.var_at(i))
                            .filter(|v| tape.attention_weights(*v).is_some()),
                    );
                    out
                }
            };
            let is_output = !jk && l == m - 1;
            if !is_output {
                if let Some(&(gamma, beta)) = self.norms.get(l) {
                    h = match &mode {
                        Mode::Train(_) => {
                            let (out, stats) = tape.batch_norm(h, vars[gamma], vars[beta])?;
                            batch_stats.push(stats);
                            out
                        }
                        Mode::Eval => {
                            let run = &self.running[l];
                            tape.batch_norm_frozen(h, vars[gamma], vars[beta], &run.mean, &run.var)?
                        }
                    };
                }
                h = if act_elu { tape.elu(h) } else { tape.relu(h) };
            }
            outputs.push(h);
        }
        let logits = match self.head {
            Some((w, b)) => {
                let cat = tape.concat_cols(&outputs)?;
                let cat = self.maybe_dropout(tape, cat, &mut mode)?;
                let z = tape.matmul(cat, vars[w])?;
                tape.add_bias(z, vars[b])?
            }
            None => h,
        };
        Ok(Forward {
            logits,
            layer_outputs: outputs,
            batch_stats,
            attention,
        })
    }

    fn maybe_dropout(&self, tape: &mut Tape, h: Var, mode: &mut Mode<'_>) -> Result<Var> {
        match mode {
            Mode::Train(rng) if self.config.dropout_rate > 0.0 => {
                let len = tape.value(h).data().len();
                let mask = dropout_mask(len, self.config.dropout_rate, rng)?;
                tape.mask(h, mask)
            }
            _ => Ok(h),
        }
    }

    /// Inference logits for a whole graph or query payload.
    pub fn predict_logits(&self, features: &Matrix, adjacency: &[Vec<usize>]) -> Result<Matrix> {
        if adjacency.len() != features.rows() {
            return Err(Error::arg("adjacency and feature row counts differ"));
        }
        let prop = Propagation::new(adjacency);
        let mut tape = Tape::new();
        let x = tape.input(features.clone());
        let fwd = self.forward(&mut tape, x, &prop, Mode::Eval)?;
        Ok(tape.value(fwd.logits).clone())
    }
}

impl LogitModel for GnnModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn logits(&self, features: &Matrix, adjacency: &[Vec<usize>]) -> Result<Matrix> {
        self.predict_logits(features, adjacency)
    }
}

/// Wraps a model and divides its logits by a positive temperature.
/// The argmax, and therefore every label-only answer, is unchanged.
pub struct TemperatureScaled<M> {
    pub inner: M,
    pub temperature: f64,
}

impl<M: LogitModel> LogitModel for TemperatureScaled<M> {
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn logits(&self, features: &Matrix, adjacency: &[Vec<usize>]) -> Result<Matrix> {
        Ok(self.inner.logits(features, adjacency)?.scale(1.0 / self.temperature))
    }
}
