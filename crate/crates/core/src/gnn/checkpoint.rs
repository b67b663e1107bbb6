//! Model checkpoints: `manifest.json` (architecture, tensor names and shapes)
//! plus `params.bin`, every tensor as little-endian `f64` in manifest order,
//! followed by the running normalization statistics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{GnnModel, RunningStats};
use super::train::TrainedGnn;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    architecture: GnnModel,
    tensors: Vec<TensorEntry>,
    running_widths: Vec<usize>,
    train_accuracy: f64,
    test_accuracy: f64,
    train_set_id: String,
}

pub fn save_checkpoint(model: &TrainedGnn, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let arch = &model.model;
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        architecture: arch.clone(),
        tensors: arch
            .param_names()
            .iter()
            .zip(arch.params())
            .map(|(name, p)| TensorEntry {
                name: name.clone(),
                rows: p.rows(),
                cols: p.cols(),
            })
            .collect(),
        running_widths: arch.running_stats().iter().map(|r| r.mean.len()).collect(),
        train_accuracy: model.train_accuracy,
        test_accuracy: model.test_accuracy,
        train_set_id: model.train_set_id.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;

    let mut blob = Vec::new();
    for p in arch.params() {
        for v in p.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    for r in arch.running_stats() {
        for v in r.mean.iter().chain(&r.var) {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(&dir.join(PARAMS_FILE), &blob)
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainedGnn> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, None, e.to_string()))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::format(
            &manifest_path,
            None,
            format!("unsupported checkpoint version {}", manifest.version),
        ));
    }
    let blob_path = dir.join(PARAMS_FILE);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let expected: usize = manifest.tensors.iter().map(|t| t.rows * t.cols).sum::<usize>()
        + manifest.running_widths.iter().map(|w| 2 * w).sum::<usize>();
    if blob.len() != expected * 8 {
        return Err(Error::format(
            &blob_path,
            None,
            format!("expected {} bytes, found {}", expected * 8, blob.len()),
        ));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let params = manifest
        .tensors
        .iter()
        .map(|t| Matrix::from_vec(t.rows, t.cols, take(t.rows * t.cols)))
        .collect::<Result<Vec<_>>>()?;
    let running = manifest
        .running_widths
        .iter()
        .map(|&w| RunningStats {
            mean: take(w),
            var: take(w),
        })
        .collect();
    // Rebuild the architecture from its config so derived shapes are re-checked.
    let arch = manifest.architecture;
    let mut model = GnnModel::new(
        arch.config(),
        arch.input_dim(),
        crate::graph::LogitModel::num_classes(&arch),
    )
    .map_err(|e| Error::format(&manifest_path, None, e.to_string()))?;
    if model.param_names() != arch.param_names() {
        return Err(Error::format(
            &manifest_path,
            None,
            "tensor layout does not match the configuration",
        ));
    }
    model
        .restore_state(params, running)
        .map_err(|e| Error::format(&blob_path, None, e.to_string()))?;
    Ok(TrainedGnn {
        model,
        train_accuracy: manifest.train_accuracy,
        test_accuracy: manifest.test_accuracy,
        train_set_id: manifest.train_set_id,
        loss_trace: Vec::new(),
    })
}
