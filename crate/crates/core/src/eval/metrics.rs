use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FPR_TARGET: f64 = 0.1;

/// The six headline numbers of an attack, in reporting order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
    pub f1: f64,
    pub tpr_at_fpr: f64,
}

impl MetricValues {
    pub const NAMES: [&'static str; 6] = ["acc", "pre", "rec", "auc", "f1", "tpr_at_fpr"];

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.auc,
            self.f1,
            self.tpr_at_fpr,
        ]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Self {
            accuracy: a[0],
            precision: a[1],
            recall: a[2],
            auc: a[3],
            f1: a[4],
            tpr_at_fpr: a[5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub values: MetricValues,
    pub fpr_target: f64,
    pub threshold: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    pub seed: u64,
    pub config_fingerprint: String,
}

impl MetricsReport {
    pub fn with_provenance(mut self, seed: u64, config_fingerprint: impl Into<String>) -> Self {
        self.seed = seed;
        self.config_fingerprint = config_fingerprint.into();
        self
    }
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::arg(format!("label {l} is not binary")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::arg("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::arg("metrics need both positive and negative labels"));
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC: the probability that a random positive outscores a random
/// negative, ties counting one half. Computed from mid-ranks.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Highest true-positive rate over the operating points `score >= t` whose
/// false-positive rate does not exceed `fpr_target`. No interpolation.
pub fn tpr_at_fpr(scores: &[f64], labels: &[u8], fpr_target: f64) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if fp as f64 / neg as f64 <= fpr_target {
            best = tp as f64 / pos as f64;
        } else {
            break;
        }
    }
    Ok(best)
}

/// Threshold metrics (`score >= threshold` predicts a member) plus AUC and
/// TPR at `fpr_target`. Precision and F1 are 0 when nothing is predicted positive.
pub fn compute_metrics(scores: &[f64], labels: &[u8], threshold: f64, fpr_target: f64) -> Result<MetricsReport> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if !(0.0..=1.0).contains(&fpr_target) {
        return Err(Error::arg(format!("fpr target {fpr_target} outside [0, 1]")));
    }
    let (mut tp, mut fp, mut tn) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => {}
        }
    }
    let accuracy = (tp + tn) as f64 / labels.len() as f64;
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = tp as f64 / pos as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricsReport {
        values: MetricValues {
            accuracy,
            precision,
            recall,
            auc: auc(scores, labels)?,
            f1,
            tpr_at_fpr: tpr_at_fpr(scores, labels, fpr_target)?,
        },
        fpr_target,
        threshold,
        n_positive: pos,
        n_negative: neg,
        seed: 0,
        config_fingerprint: String::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Number of reports aggregated.
    pub n: usize,
    pub fpr_target: f64,
    pub mean: MetricValues,
    /// Sample standard deviation; 0 for a single report.
    pub std: MetricValues,
}

pub fn aggregate_repetitions(reports: &[MetricsReport]) -> Result<MetricsSummary> {
    let first = reports.first().ok_or_else(|| Error::arg("no reports to aggregate"))?;
    if reports.iter().any(|r| r.fpr_target != first.fpr_target) {
        return Err(Error::arg("reports use different fpr targets"));
    }
    let n = reports.len() as f64;
    let mut mean = [0.0; 6];
    for r in reports {
        for (m, v) in mean.iter_mut().zip(r.values.as_array()) {
            *m += v / n;
        }
    }
    let mut std = [0.0; 6];
    if reports.len() > 1 {
        for r in reports {
            for ((s, v), m) in std.iter_mut().zip(r.values.as_array()).zip(mean) {
                *s += (v - m) * (v - m);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / (n - 1.0)).sqrt());
    }
    Ok(MetricsSummary {
        n: reports.len(),
        fpr_target: first.fpr_target,
        mean: MetricValues::from_array(mean),
        std: MetricValues::from_array(std),
    })
}
