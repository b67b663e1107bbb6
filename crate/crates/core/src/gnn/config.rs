use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnType {
    Gcn,
    Gat,
    #[serde(rename = "graphsage", alias = "sage")]
    GraphSage,
    Gin,
}

impl GnnType {
    pub const ALL: [GnnType; 4] = [GnnType::Gat, GnnType::Gcn, GnnType::Gin, GnnType::GraphSage];

    pub fn as_str(self) -> &'static str {
        match self {
            GnnType::Gcn => "GCN",
            GnnType::Gat => "GAT",
            GnnType::GraphSage => "GraphSAGE",
            GnnType::Gin => "GIN",
        }
    }
}

impl fmt::Display for GnnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GnnType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(GnnType::Gcn),
            "gat" => Ok(GnnType::Gat),
            "graphsage" | "sage" => Ok(GnnType::GraphSage),
            "gin" => Ok(GnnType::Gin),
            other => Err(Error::arg(format!("unknown GNN type {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overfitting {
    Low,
    High,
}

impl FromStr for Overfitting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Overfitting::Low),
            "high" => Ok(Overfitting::High),
            other => Err(Error::arg(format!("unknown overfitting level {other:?}"))),
        }
    }
}

/// Architecture and training hyperparameters of a node-classification GNN.
///
/// `num_layers` counts the input, hidden and output layers, so a model has
/// `num_layers - 1` message-passing layers and `num_layers - 2` hidden
/// representations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub gnn_type: GnnType,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub use_batchnorm: bool,
    pub dropout_rate: f64,
    pub use_jumping_knowledge: bool,
    pub gat_heads: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 2 {
            return Err(Error::arg(format!("num_layers must be >= 2, got {}", self.num_layers)));
        }
        if self.hidden_dim == 0 {
            return Err(Error::arg("hidden_dim must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::arg(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.gat_heads == 0 {
            return Err(Error::arg("gat_heads must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning_rate must be finite and non-negative"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::arg("weight_decay must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn message_passing_layers(&self) -> usize {
        self.num_layers - 1
    }
}

/// The two overfitting configurations used throughout the experiments.
pub fn preset_config(level: Overfitting, gnn_type: GnnType) -> GnnConfig {
    match level {
        Overfitting::Low => GnnConfig {
            gnn_type,
            num_layers: 3,
            hidden_dim: 16,
            use_batchnorm: true,
            dropout_rate: 0.5,
            use_jumping_knowledge: true,
            gat_heads: 1,
            learning_rate: 6e-3,
            weight_decay: 0.5,
            epochs: 400,
            seed: 0,
        },
        Overfitting::High => GnnConfig {
            gnn_type,
            num_layers: 5,
            hidden_dim: 64,
            use_batchnorm: false,
            dropout_rate: 0.0,
            use_jumping_knowledge: false,
            gat_heads: 1,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            epochs: 200,
            seed: 0,
        },
    }
}

/// The four overfitting countermeasures that can be layered on a configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DefenseFlags {
    pub normalization: bool,
    pub dropout: bool,
    pub regularization: bool,
    pub jumping_knowledge: bool,
}

pub const DEFENSE_DROPOUT_RATE: f64 = 0.5;
pub const DEFENSE_WEIGHT_DECAY: f64 = 0.5;

impl DefenseFlags {
    pub fn apply(self, mut config: GnnConfig) -> GnnConfig {
        config.use_batchnorm = self.normalization;
        config.dropout_rate = if self.dropout { DEFENSE_DROPOUT_RATE } else { 0.0 };
        config.weight_decay = if self.regularization { DEFENSE_WEIGHT_DECAY } else { 0.0 };
        config.use_jumping_knowledge = self.jumping_knowledge;
        config
    }

    pub fn as_array(self) -> [bool; 4] {
        [
            self.normalization,
            self.dropout,
            self.regularization,
            self.jumping_knowledge,
        ]
    }

    pub fn from_array(a: [bool; 4]) -> Self {
        Self {
            normalization: a[0],
            dropout: a[1],
            regularization: a[2],
            jumping_knowledge: a[3],
        }
    }

    /// All 16 combinations: no defense, then singles, pairs, triples and all
    /// four, each group in lexicographic order of (normalization, dropout,
    /// regularization, jumping knowledge).
    pub fn grid() -> Vec<DefenseFlags> {
        let mut rows = Vec::with_capacity(16);
        for size in 0..=4usize {
            for mask in combinations(4, size) {
                let mut a = [false; 4];
                for i in mask {
                    a[i] = true;
                }
                rows.push(DefenseFlags::from_array(a));
            }
        }
        rows
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}
