//! Graph bundle directories.
//!
//! ```text
//! manifest.json   {"version":1,"num_nodes":..,"num_classes":..,"feature_dim":..,"feature_encoding":"binary_f32"|"csv"}
//! edges.tsv       src<TAB>dst per line
//! labels.tsv      one class index per line, in node order
//! features.bin    row-major little-endian f32, or
//! features.csv    one comma-separated row per node
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::write_atomic;
use crate::nn::Matrix;

pub const BUNDLE_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const EDGES: &str = "edges.tsv";
const LABELS: &str = "labels.tsv";
const FEATURES_BIN: &str = "features.bin";
const FEATURES_CSV: &str = "features.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureEncoding {
    BinaryF32,
    Csv,
}

impl FromStr for FeatureEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary_f32" | "binary" => Ok(Self::BinaryF32),
            "csv" => Ok(Self::Csv),
            other => Err(Error::arg(format!("unknown feature encoding {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub version: u32,
    pub num_nodes: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub feature_encoding: FeatureEncoding,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with their 1-based line numbers. A trailing line feed is
/// allowed; blank lines elsewhere are rejected.
fn data_lines<'a>(path: &'a Path, text: &'a str) -> impl Iterator<Item = Result<(usize, &'a str)>> + 'a {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let lines: Vec<&str> = if body.is_empty() {
        Vec::new()
    } else {
        body.split('\n').collect()
    };
    lines.into_iter().enumerate().map(move |(i, line)| {
        if line.trim().is_empty() {
            Err(Error::format(path, Some(i + 1), "blank line"))
        } else {
            Ok((i + 1, line))
        }
    })
}

fn parse_field<T: FromStr>(path: &Path, row: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::format(path, Some(row), format!("cannot parse {what} from {field:?}")))
}

pub fn load_bundle(dir: &Path) -> Result<Graph> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: BundleManifest = serde_json::from_str(&read_text(&manifest_path)?)
        .map_err(|e| Error::format(&manifest_path, None, e.to_string()))?;
    if manifest.version != BUNDLE_VERSION {
        return Err(Error::format(
            &manifest_path,
            None,
            format!("unsupported bundle version {}", manifest.version),
        ));
    }
    if manifest.num_classes == 0 {
        return Err(Error::format(&manifest_path, None, "num_classes must be positive"));
    }
    let n = manifest.num_nodes;

    let labels_path = dir.join(LABELS);
    let labels_text = read_text(&labels_path)?;
    let mut labels = Vec::with_capacity(n);
    for item in data_lines(&labels_path, &labels_text) {
        let (row, line) = item?;
        let label: usize = parse_field(&labels_path, row, line, "a label")?;
        if label >= manifest.num_classes {
            return Err(Error::format(
                &labels_path,
                Some(row),
                format!("label {label} is not below num_classes={}", manifest.num_classes),
            ));
        }
        labels.push(label);
    }
    if labels.len() != n {
        return Err(Error::format(
            &labels_path,
            None,
            format!("expected {n} labels, found {}", labels.len()),
        ));
    }

    let edges_path = dir.join(EDGES);
    let edges_text = read_text(&edges_path)?;
    let mut edges = Vec::new();
    for item in data_lines(&edges_path, &edges_text) {
        let (row, line) = item?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::format(
                &edges_path,
                Some(row),
                format!("expected 2 tab-separated fields, found {}", fields.len()),
            ));
        }
        let u: usize = parse_field(&edges_path, row, fields[0], "a node index")?;
        let v: usize = parse_field(&edges_path, row, fields[1], "a node index")?;
        if u >= n || v >= n {
            return Err(Error::format(
                &edges_path,
                Some(row),
                format!("edge ({u}, {v}) references a node >= num_nodes={n}"),
            ));
        }
        edges.push((u, v));
    }

    let d = manifest.feature_dim;
    let features = match manifest.feature_encoding {
        FeatureEncoding::BinaryF32 => {
            let path = dir.join(FEATURES_BIN);
            let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let expected = 4 * n * d;
            if blob.len() != expected {
                return Err(Error::format(
                    &path,
                    None,
                    format!("expected {expected} bytes, found {}", blob.len()),
                ));
            }
            let data = blob
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4"))))
                .collect();
            Matrix::from_vec(n, d, data)?
        }
        FeatureEncoding::Csv => {
            let path = dir.join(FEATURES_CSV);
            let text = read_text(&path)?;
            let mut data = Vec::with_capacity(n * d);
            let mut rows = 0;
            for item in data_lines(&path, &text) {
                let (row, line) = item?;
                let before = data.len();
                for field in line.split(',') {
                    let v: f64 = parse_field(&path, row, field, "a number")?;
                    if !v.is_finite() {
                        return Err(Error::format(&path, Some(row), "non-finite feature value"));
                    }
                    data.push(v);
                }
                if data.len() - before != d {
                    return Err(Error::format(
                        &path,
                        Some(row),
                        format!("expected {d} values, found {}", data.len() - before),
                    ));
                }
                rows += 1;
            }
            if rows != n {
                return Err(Error::format(&path, None, format!("expected {n} rows, found {rows}")));
            }
            Matrix::from_vec(n, d, data)?
        }
    };
    Graph::new(features, labels, manifest.num_classes, &edges)
}

/// Writes `graph` as a bundle. The binary encoding stores 32-bit floats, so
/// it refuses features that would not survive the narrowing unchanged.
pub fn save_bundle(graph: &Graph, dir: &Path, encoding: FeatureEncoding) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = BundleManifest {
        version: BUNDLE_VERSION,
        num_nodes: graph.num_nodes(),
        num_classes: graph.num_classes(),
        feature_dim: graph.feature_dim(),
        feature_encoding: encoding,
    };
    let data = graph.features().data();
    let features = match encoding {
        FeatureEncoding::BinaryF32 => {
            let mut blob = Vec::with_capacity(4 * data.len());
            for (i, &v) in data.iter().enumerate() {
                let narrow = v as f32;
                if f64::from(narrow) != v {
                    return Err(Error::arg(format!(
                        "feature {i} = {v} is not exactly representable as f32; use the csv encoding"
                    )));
                }
                blob.extend_from_slice(&narrow.to_le_bytes());
            }
            blob
        }
        FeatureEncoding::Csv => {
            let mut out = String::new();
            for r in 0..graph.num_nodes() {
                let row = graph.feature_row(r);
                for (k, v) in row.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    write!(out, "{v}").expect("string write");
                }
                out.push('\n');
            }
            out.into_bytes()
        }
    };

    let mut edges = String::new();
    for (u, v) in graph.edges() {
        writeln!(edges, "{u}\t{v}").expect("string write");
    }
    let mut labels = String::new();
    for l in graph.labels() {
        writeln!(labels, "{l}").expect("string write");
    }
    let features_file = match encoding {
        FeatureEncoding::BinaryF32 => FEATURES_BIN,
        FeatureEncoding::Csv => FEATURES_CSV,
    };
    write_atomic(&dir.join(features_file), &features)?;
    write_atomic(&dir.join(EDGES), edges.as_bytes())?;
    write_atomic(&dir.join(LABELS), labels.as_bytes())?;
    let manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST), manifest_text.as_bytes())
}
