use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::Matrix;
use crate::rng::{derive_seed, rng_from_seed};

/// Per-dimension noise scale of the synthetic features.
pub const FEATURE_NOISE: f64 = 0.15;

/// Parameters of a stochastic block model with Gaussian class-conditional
/// features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbmConfig {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub intra_edge_prob: f64,
    pub inter_edge_prob: f64,
    pub feature_dim: usize,
    /// Separation between class means, in units of the noise scale.
    pub feature_signal: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            num_nodes: 1000,
            num_classes: 4,
            intra_edge_prob: 0.01,
            inter_edge_prob: 0.002,
            feature_dim: 256,
            feature_signal: 0.2,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        let p_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !p_ok(self.intra_edge_prob) || !p_ok(self.inter_edge_prob) {
            return Err(Error::arg("edge probabilities must lie in [0, 1]"));
        }
        if self.inter_edge_prob > self.intra_edge_prob {
            return Err(Error::arg(format!(
                "inter_edge_prob {} exceeds intra_edge_prob {}",
                self.inter_edge_prob, self.intra_edge_prob
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::arg("num_classes must be at least 2"));
        }
        if !self.feature_signal.is_finite() || self.feature_signal < 0.0 {
            return Err(Error::arg("feature_signal must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Samples a graph. Node `i` belongs to class `i mod num_classes`; every pair
/// is connected independently with the intra- or inter-class probability.
///
/// Feature `k` of a node in class `c` is `0.5 + σ(z ± s/2)` with `+` when
/// `k mod num_classes == c`, clipped to `[0, 1]` and rounded to `f32`.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.num_nodes;
    let c = cfg.num_classes;
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();

    let mut rng = rng_from_seed(derive_seed(cfg.seed, 1));
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] {
                cfg.intra_edge_prob
            } else {
                cfg.inter_edge_prob
            };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut rng = rng_from_seed(derive_seed(cfg.seed, 2));
    let half = cfg.feature_signal / 2.0;
    let mut data = Vec::with_capacity(n * cfg.feature_dim);
    for &label in &labels {
        for k in 0..cfg.feature_dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            let shift = if k % c == label { half } else { -half };
            let v = (0.5 + FEATURE_NOISE * (z + shift)).clamp(0.0, 1.0);
            data.push(f64::from(v as f32));
        }
    }
    Graph::new(Matrix::from_vec(n, cfg.feature_dim, data)?, labels, c, &edges)
}
