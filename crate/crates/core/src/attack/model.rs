use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::table::AttackDataset;
use crate::error::{Error, Result};
use crate::nn::mlp::Mlp;
use crate::nn::tape::sigmoid;
use crate::nn::{AdamState, Matrix, Tape};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackMlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AttackMlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            epochs: 300,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl AttackMlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::arg("hidden widths must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("attack learning rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::arg("attack epochs and batch size must be positive"));
        }
        Ok(())
    }
}

/// Which per-epoch snapshot of the attack model is kept.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    TrainAcc,
    #[default]
    TestAcc,
    TrainLoss,
    TestLoss,
    /// Accuracy on the attacked model's own records; not available to a real
    /// adversary.
    EvaluateAcc,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 5] = [
        Self::TrainAcc,
        Self::TestAcc,
        Self::TrainLoss,
        Self::TestLoss,
        Self::EvaluateAcc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TrainAcc => "train_acc",
            Self::TestAcc => "test_acc",
            Self::TrainLoss => "train_loss",
            Self::TestLoss => "test_loss",
            Self::EvaluateAcc => "evaluate_acc",
        }
    }

    fn key(self, m: &EpochMetrics) -> f64 {
        match self {
            Self::TrainAcc => -m.train_acc,
            Self::TestAcc => -m.test_acc,
            Self::TrainLoss => m.train_loss,
            Self::TestLoss => m.test_loss,
            Self::EvaluateAcc => -m.evaluate_acc.unwrap_or(f64::NAN),
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown selection strategy {s:?}")))
    }
}

/// Per-column affine standardization fitted on training rows. Columns with
/// zero variance are left untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut scale = Vec::with_capacity(d);
        for (k, s) in var.iter().enumerate() {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                scale.push(sd);
            } else {
                mean[k] = 0.0;
                scale.push(1.0);
            }
        }
        Self { mean, scale }
    }

    pub fn transform(&self, rows: &[&[f64]]) -> Matrix {
        let d = self.mean.len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            data.extend(r.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s));
        }
        Matrix::from_vec(rows.len(), d, data).expect("rows share the fitted width")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub columns: Vec<String>,
    pub standardizer: Standardizer,
    pub mlp: Mlp,
}

impl AttackModel {
    /// Membership probabilities for every record of `data`.
    pub fn scores(&self, data: &AttackDataset) -> Result<Vec<f64>> {
        if data.columns != self.columns {
            return Err(Error::arg("dataset columns differ from the attack model's schema"));
        }
        let logits = self.logits(&rows_of(data))?;
        Ok(logits.data().iter().map(|&z| sigmoid(z)).collect())
    }

    fn logits(&self, rows: &[&[f64]]) -> Result<Matrix> {
        self.mlp.predict(&self.standardizer.transform(rows))
    }
}

fn rows_of(data: &AttackDataset) -> Vec<&[f64]> {
    data.records.iter().map(|r| r.features.as_slice()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub evaluate_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedAttack {
    pub model: AttackModel,
    pub trace: Vec<EpochMetrics>,
    /// 1-based epoch whose snapshot was kept.
    pub selected_epoch: usize,
    pub selection: SelectionStrategy,
    /// Set when the snapshot was chosen with information a real adversary lacks.
    pub oracle_only: bool,
}

/// Mean binary cross-entropy and accuracy at logit threshold 0.
fn loss_and_accuracy(logits: &Matrix, labels: &[u8]) -> (f64, f64) {
    if labels.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut loss = 0.0;
    let mut hits = 0usize;
    for (&z, &y) in logits.data().iter().zip(labels) {
        let y = f64::from(y);
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        hits += usize::from((z >= 0.0) == (y == 1.0));
    }
    (loss / labels.len() as f64, hits as f64 / labels.len() as f64)
}

/// Trains the attack classifier on `train`, scoring every epoch on `train`,
/// `holdout` and (optionally) `evaluation`, and keeps the epoch that is best
/// under `selection` (earliest on ties).
pub fn train_attack_model(
    train: &AttackDataset,
    holdout: &AttackDataset,
    config: &AttackMlpConfig,
    selection: SelectionStrategy,
    evaluation: Option<&AttackDataset>,
) -> Result<TrainedAttack> {
    config.validate()?;
    let labels = train.labels();
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::arg("attack training data must contain members and non-members"));
    }
    if holdout.columns != train.columns || evaluation.is_some_and(|e| e.columns != train.columns) {
        return Err(Error::arg("attack datasets have different columns"));
    }
    match selection {
        SelectionStrategy::EvaluateAcc if evaluation.is_none() => {
            return Err(Error::arg("evaluate_acc selection needs an explicit evaluation set"));
        }
        SelectionStrategy::TestAcc | SelectionStrategy::TestLoss if holdout.is_empty() => {
            return Err(Error::arg(format!(
                "{selection} selection needs a non-empty holdout set"
            )));
        }
        _ => {}
    }

    let train_rows = rows_of(train);
    let standardizer = Standardizer::fit(&train_rows);
    let x_train = standardizer.transform(&train_rows);
    let x_hold = standardizer.transform(&rows_of(holdout));
    let hold_labels = holdout.labels();
    let eval = evaluation.map(|e| (standardizer.transform(&rows_of(e)), e.labels()));

    let mut init_rng = rng_from_seed(derive_seed(config.seed, 1));
    let mut widths = vec![train.columns.len()];
    widths.extend(&config.hidden);
    widths.push(1);
    let mut mlp = Mlp::new(&widths, &mut init_rng);
    let mut adam = AdamState::new(mlp.params(), config.learning_rate, 0.0);
    let mut rng = rng_from_seed(derive_seed(config.seed, 2));
    let targets: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Mlp)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let x = tape.input(x_train.select_rows(batch));
            let (out, _) = mlp.forward(&mut tape, x)?;
            let y: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            let loss = tape.bce_with_logits(out, &y)?;
            tape.ensure_finite(loss, &format!("attack training epoch {epoch}"))?;
            let grads = tape.backward(loss)?.param_grads(&tape, mlp.params());
            adam.step(mlp.params_mut(), &grads)?;
        }
        let (train_loss, train_acc) = loss_and_accuracy(&mlp.predict(&x_train)?, &labels);
        let (test_loss, test_acc) = loss_and_accuracy(&mlp.predict(&x_hold)?, &hold_labels);
        let evaluate_acc = match &eval {
            Some((x, y)) => Some(loss_and_accuracy(&mlp.predict(x)?, y).1),
            None => None,
        };
        let m = EpochMetrics {
            epoch,
            train_acc,
            test_acc,
            train_loss,
            test_loss,
            evaluate_acc,
        };
        let key = selection.key(&m);
        if best.as_ref().is_none_or(|(k, _, _)| key < *k) {
            best = Some((key, epoch, mlp.clone()));
        }
        trace.push(m);
    }
    let (_, selected_epoch, mlp) = best.expect("at least one epoch");
    Ok(TrainedAttack {
        model: AttackModel {
            columns: train.columns.clone(),
            standardizer,
            mlp,
        },
        trace,
        selected_epoch,
        selection,
        oracle_only: selection == SelectionStrategy::EvaluateAcc,
    })
}
