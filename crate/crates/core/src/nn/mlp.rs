use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::Result;
use crate::rng::Rng;

/// Fully connected ReLU network. Parameters are stored as `[W0, b0, W1, b1, ...]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<Matrix>,
}

impl Mlp {
    /// `widths` lists every layer width, input first and output last.
    pub fn new(widths: &[usize], rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let mut params = Vec::new();
        for pair in widths.windows(2) {
            params.push(glorot_uniform(pair[0], pair[1], rng));
            params.push(Matrix::zeros(1, pair[1]));
        }
        Self {
            widths: widths.to_vec(),
            params,
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    /// Records a forward pass; returns the output and the parameter handles.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<(Var, Vec<Var>)> {
        let vars: Vec<Var> = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param(i, p.clone()))
            .collect();
        let layers = vars.len() / 2;
        let mut h = x;
        for l in 0..layers {
            h = tape.matmul(h, vars[2 * l])?;
            h = tape.add_bias(h, vars[2 * l + 1])?;
            if l + 1 < layers {
                h = tape.relu(h);
            }
        }
        Ok((h, vars))
    }

    /// Forward pass without keeping a tape around.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let input = tape.input(x.clone());
        let (out, _) = self.forward(&mut tape, input)?;
        Ok(tape.value(out).clone())
    }
}
