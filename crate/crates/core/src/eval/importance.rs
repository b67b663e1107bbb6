use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, compute_metrics};
use crate::attack::{AttackDataset, AttackModel};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    #[default]
    Accuracy,
    Auc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub importance: f64,
}

fn score(model: &AttackModel, data: &AttackDataset, labels: &[u8], metric: ImportanceMetric) -> Result<f64> {
    let s = model.scores(data)?;
    match metric {
        ImportanceMetric::Accuracy => Ok(compute_metrics(&s, labels, 0.5, 0.1)?.values.accuracy),
        ImportanceMetric::Auc => auc(&s, labels),
    }
}

/// Drop in `metric` when one column is shuffled across records, averaged over
/// `repeats` seeded shuffles. Sorted by importance, largest first; ties keep
/// schema order.
pub fn permutation_importance(
    model: &AttackModel,
    data: &AttackDataset,
    metric: ImportanceMetric,
    repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>> {
    if repeats < 1 {
        return Err(Error::arg("permutation importance needs at least one repeat"));
    }
    let labels = data.labels();
    let baseline = score(model, data, &labels, metric)?;
    let mut out = (0..data.columns.len())
        .into_par_iter()
        .map(|col| {
            let mut rng = rng_from_seed(derive_seed(seed, col as u64));
            let mut total = 0.0;
            for _ in 0..repeats {
                let mut column: Vec<f64> = data.records.iter().map(|r| r.features[col]).collect();
                column.shuffle(&mut rng);
                let mut shuffled = data.clone();
                for (r, v) in shuffled.records.iter_mut().zip(column) {
                    r.features[col] = v;
                }
                total += baseline - score(model, &shuffled, &labels, metric)?;
            }
            Ok(FeatureImportance {
                feature: data.columns[col].clone(),
                importance: total / repeats as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    Ok(out)
}
