use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::rng::rng_from_seed;

const SCHEMA_PREFIX: &str = "# schema: ";

#[derive(Clone, Debug, PartialEq)]
pub struct AttackRecord {
    pub node: usize,
    /// 1 for members of the model's training set, 0 otherwise.
    pub membership: u8,
    pub features: Vec<f64>,
}

/// Rows sharing one named column layout; used for the label-only features and
/// for the posterior baselines alike.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackDataset {
    pub columns: Vec<String>,
    pub records: Vec<AttackRecord>,
}

impl AttackDataset {
    pub fn new(columns: Vec<String>, records: Vec<AttackRecord>) -> Result<Self> {
        if let Some(r) = records.iter().find(|r| r.features.len() != columns.len()) {
            return Err(Error::arg(format!(
                "record for node {} has {} values, schema has {}",
                r.node,
                r.features.len(),
                columns.len()
            )));
        }
        if let Some(r) = records.iter().find(|r| r.membership > 1) {
            return Err(Error::arg(format!(
                "membership {} of node {} is not binary",
                r.membership, r.node
            )));
        }
        Ok(Self { columns, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.membership).collect()
    }

    /// Stratified seeded split; roughly `holdout_fraction` of each class goes
    /// to the second part.
    pub fn stratified_split(&self, holdout_fraction: f64, seed: u64) -> Result<(AttackDataset, AttackDataset)> {
        if !(0.0..1.0).contains(&holdout_fraction) {
            return Err(Error::arg(format!(
                "holdout fraction {holdout_fraction} outside [0, 1)"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut train = Vec::new();
        let mut holdout = Vec::new();
        for class in [0u8, 1] {
            let mut idx: Vec<usize> = (0..self.records.len())
                .filter(|&i| self.records[i].membership == class)
                .collect();
            idx.shuffle(&mut rng);
            let cut = (idx.len() as f64 * holdout_fraction).round() as usize;
            holdout.extend(idx[..cut].iter().map(|&i| self.records[i].clone()));
            train.extend(idx[cut..].iter().map(|&i| self.records[i].clone()));
        }
        Ok((
            AttackDataset::new(self.columns.clone(), train)?,
            AttackDataset::new(self.columns.clone(), holdout)?,
        ))
    }

    /// Column-headered text table: a schema comment line, then
    /// `node,membership,<columns...>` and one row per record.
    pub fn to_csv(&self, schema: &str) -> String {
        let mut out = format!("{SCHEMA_PREFIX}{schema}\nnode,membership");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.records {
            write!(out, "{},{}", r.node, r.membership).expect("string write");
            for v in &r.features {
                write!(out, ",{v}").expect("string write");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path, schema: &str) -> Result<()> {
        write_atomic(path, self.to_csv(schema).as_bytes())
    }

    /// Parses [`AttackDataset::to_csv`] output; returns the dataset and the schema string.
    pub fn read_csv(path: &Path) -> Result<(AttackDataset, String)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let schema = match lines.next() {
            Some((_, l)) if l.starts_with(SCHEMA_PREFIX) => l[SCHEMA_PREFIX.len()..].to_string(),
            _ => return Err(Error::format(path, Some(1), "missing schema line")),
        };
        let header: Vec<&str> = match lines.next() {
            Some((_, l)) => l.split(',').collect(),
            None => return Err(Error::format(path, Some(2), "missing header")),
        };
        if header.len() < 2 || header[0] != "node" || header[1] != "membership" {
            return Err(Error::format(path, Some(2), "header must start with node,membership"));
        }
        let columns: Vec<String> = header[2..].iter().map(|s| s.to_string()).collect();
        let mut records = Vec::new();
        for (i, line) in lines {
            let row = i + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(Error::format(
                    path,
                    Some(row),
                    format!("expected {} fields, found {}", header.len(), fields.len()),
                ));
            }
            let bad = |what: &str| Error::format(path, Some(row), format!("cannot parse {what}"));
            let node = fields[0].parse().map_err(|_| bad("node id"))?;
            let membership: u8 = fields[1].parse().map_err(|_| bad("membership"))?;
            if membership > 1 {
                return Err(bad("membership"));
            }
            let features = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad("feature value")))
                .collect::<Result<Vec<_>>>()?;
            records.push(AttackRecord {
                node,
                membership,
                features,
            });
        }
        Ok((AttackDataset::new(columns, records)?, schema))
    }
}
