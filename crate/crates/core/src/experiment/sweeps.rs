use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, RelaxationAxisKind, RelaxationConfig, SideConfig};
use super::runner::{run_experiment, to_json, RunReport, StageFailure};
use crate::error::{Error, Result};
use crate::gnn::{DefenseFlags, GnnType, Overfitting};
use crate::io::write_atomic;

pub const DEFENSE_GRID_HEADER: &str =
    "row,normalization,dropout,regularization,jumping_knowledge,acc,acc_std,auc,target_train_acc,target_test_acc,target_gap,n,status";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseRow {
    /// Position in the full sixteen-cell ordering.
    pub row: usize,
    pub flags: DefenseFlags,
    pub accuracy: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub auc: Option<f64>,
    pub target_train_accuracy: Option<f64>,
    pub target_test_accuracy: Option<f64>,
    pub target_gap: Option<f64>,
    pub effective_n: usize,
    pub failure: Option<StageFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseGridReport {
    pub rows: Vec<DefenseRow>,
}

impl DefenseGridReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{DEFENSE_GRID_HEADER}\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let f = r.flags.as_array().map(u8::from);
            let status = match &r.failure {
                None => "ok".to_string(),
                Some(s) => format!("failed:{}", s.stage),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.row,
                f[0],
                f[1],
                f[2],
                f[3],
                opt(r.accuracy),
                opt(r.accuracy_std),
                opt(r.auc),
                opt(r.target_train_accuracy),
                opt(r.target_test_accuracy),
                opt(r.target_gap),
                r.effective_n,
                status
            )
            .expect("string write");
        }
        out
    }
}

fn cell_failure(e: &Error) -> StageFailure {
    StageFailure {
        stage: "setup".into(),
        kind: e.kind().into(),
        message: e.to_string(),
    }
}

/// The base config with one defense cell applied to the high-overfit preset.
/// A shadow that mirrors the target mirrors the defenses too.
pub fn defense_cell_config(base: &ExperimentConfig, flags: DefenseFlags) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.source_text = None;
    cfg.target.model.preset = Overfitting::High;
    cfg.target.model.defenses = Some(flags);
    cfg
}

/// One experiment per defense cell, rows in the canonical sixteen-cell order
/// (cells not listed in `base.defense_grid` are skipped).
pub fn run_defense_grid(base: &ExperimentConfig, out: Option<&Path>) -> Result<DefenseGridReport> {
    base.validate()?;
    let wanted = base.defense_grid.clone();
    let mut rows = Vec::new();
    for (row, flags) in DefenseFlags::grid().into_iter().enumerate() {
        if wanted.as_ref().is_some_and(|w| !w.contains(&flags)) {
            continue;
        }
        let cfg = defense_cell_config(base, flags);
        let cell_out = out.map(|o| o.join(format!("cell_{row:02}")));
        let mut r = DefenseRow {
            row,
            flags,
            accuracy: None,
            accuracy_std: None,
            auc: None,
            target_train_accuracy: None,
            target_test_accuracy: None,
            target_gap: None,
            effective_n: 0,
            failure: None,
        };
        match run_experiment(&cfg, cell_out.as_deref()) {
            Ok(report) => fill_row(&mut r, &report),
            Err(e) => r.failure = Some(cell_failure(&e)),
        }
        rows.push(r);
    }
    let report = DefenseGridReport { rows };
    if let Some(o) = out {
        write_atomic(&o.join("defense_grid.csv"), report.to_csv().as_bytes())?;
        write_atomic(&o.join("defense_grid.json"), to_json(&report)?.as_bytes())?;
    }
    Ok(report)
}

fn fill_row(r: &mut DefenseRow, report: &RunReport) {
    r.effective_n = report.effective_n();
    match &report.summary {
        Some(s) => {
            r.accuracy = Some(s.attack.mean.accuracy);
            r.accuracy_std = Some(s.attack.std.accuracy);
            r.auc = Some(s.attack.mean.auc);
            r.target_train_accuracy = Some(s.target_train_accuracy);
            r.target_test_accuracy = Some(s.target_test_accuracy);
            r.target_gap = Some(s.target_gap);
        }
        None => r.failure = report.first_failure().cloned(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationMatrix {
    pub axis: RelaxationAxisKind,
    pub labels: Vec<String>,
    /// `accuracy[i][j]`: target setting `i`, shadow setting `j`.
    pub accuracy: Vec<Vec<Option<f64>>>,
    pub auc: Vec<Vec<Option<f64>>>,
    pub failures: Vec<(usize, usize, StageFailure)>,
}

impl RelaxationMatrix {
    /// Labeled square table; empty cells failed.
    pub fn to_csv(&self, values: &[Vec<Option<f64>>]) -> String {
        let mut out = String::from("target\\shadow");
        for l in &self.labels {
            write!(out, ",{l}").expect("string write");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(values) {
            out.push_str(l);
            for v in row {
                write!(out, ",{}", v.map(|x| x.to_string()).unwrap_or_default()).expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

fn axis_labels(axis: &RelaxationConfig) -> Vec<String> {
    match axis.axis {
        RelaxationAxisKind::GnnType => axis.gnn_types.iter().map(|g| g.as_str().to_string()).collect(),
        RelaxationAxisKind::Dataset => axis.datasets.iter().map(DataSource::display_label).collect(),
    }
}

/// Config for cell `(i, j)`: target takes setting `i`, shadow setting `j`,
/// everything else from `base`.
pub fn relaxation_cell_config(
    base: &ExperimentConfig,
    axis: &RelaxationConfig,
    i: usize,
    j: usize,
) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.source_text = None;
    cfg.relaxation = None;
    let shadow_base = base.shadow_side().clone();
    match axis.axis {
        RelaxationAxisKind::GnnType => {
            let pick = |k: usize| -> GnnType { axis.gnn_types[k] };
            cfg.target.model.gnn_type = pick(i);
            let mut shadow = shadow_base;
            shadow.model.gnn_type = pick(j);
            cfg.shadow = Some(shadow);
        }
        RelaxationAxisKind::Dataset => {
            cfg.target.data = axis.datasets[i].clone();
            cfg.shadow = Some(SideConfig {
                data: axis.datasets[j].clone(),
                model: shadow_base.model,
            });
        }
    }
    cfg
}

/// Attack accuracy (and AUC) for every (target setting, shadow setting) pair
/// of the axis in `base.relaxation`.
pub fn run_relaxation_matrix(base: &ExperimentConfig, out: Option<&Path>) -> Result<RelaxationMatrix> {
    base.validate()?;
    let axis = base
        .relaxation
        .as_ref()
        .ok_or_else(|| Error::Config("missing [relaxation] section".into()))?;
    let labels = axis_labels(axis);
    let n = labels.len();
    let mut accuracy = vec![vec![None; n]; n];
    let mut auc = vec![vec![None; n]; n];
    let mut failures = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let cfg = relaxation_cell_config(base, axis, i, j);
            let cell_out = out.map(|o| o.join(format!("cell_{i}_{j}")));
            match run_experiment(&cfg, cell_out.as_deref()) {
                Ok(report) => match &report.summary {
                    Some(s) => {
                        accuracy[i][j] = Some(s.attack.mean.accuracy);
                        auc[i][j] = Some(s.attack.mean.auc);
                    }
                    None => failures.extend(report.first_failure().cloned().map(|f| (i, j, f))),
                },
                Err(e) => failures.push((i, j, cell_failure(&e))),
            }
        }
    }
    let m = RelaxationMatrix {
        axis: axis.axis,
        labels,
        accuracy,
        auc,
        failures,
    };
    if let Some(o) = out {
        write_atomic(&o.join("relaxation_accuracy.csv"), m.to_csv(&m.accuracy).as_bytes())?;
        write_atomic(&o.join("relaxation_auc.csv"), m.to_csv(&m.auc).as_bytes())?;
        write_atomic(&o.join("relaxation.json"), to_json(&m)?.as_bytes())?;
    }
    Ok(m)
}
