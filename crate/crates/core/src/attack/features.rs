use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::{AttackDataset, AttackRecord};
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelOracle, SubgraphQuery};
use crate::rng::{derive_seed, derive_seed_path, rng_from_seed};

pub const FEATURE_SCHEMA_VERSION: &str = "lomia-attack-features/v1";

/// Strictly ascending masking rates in `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RateSet(Vec<f64>);

impl RateSet {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::arg("rate set is empty"));
        }
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::arg(format!("rate {r} is outside (0, 1]")));
        }
        if rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("rates must be strictly ascending"));
        }
        Ok(Self(rates))
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for RateSet {
    fn default() -> Self {
        Self(vec![0.2, 0.4, 0.6, 0.8, 1.0])
    }
}

impl TryFrom<Vec<f64>> for RateSet {
    type Error = Error;

    fn try_from(rates: Vec<f64>) -> Result<Self> {
        Self::new(rates)
    }
}

impl From<RateSet> for Vec<f64> {
    fn from(r: RateSet) -> Self {
        r.0
    }
}

/// Which extremum replaces the selected feature entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Max,
    Min,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Max, Direction::Min];

    pub fn name(self) -> &'static str {
        match self {
            Direction::Max => "max",
            Direction::Min => "min",
        }
    }
}

const BLOCK_FIELDS: [&str; 7] = [
    "i_none",
    "i_all",
    "i_step",
    "n_acc_all",
    "n_acc_none",
    "n_acc_avg",
    "change_p",
];

fn rate_label(r: f64) -> String {
    if r.fract() == 0.0 {
        format!("{r:.1}")
    } else {
        format!("{r}")
    }
}

/// Column names in schema order: `n_num, w_i_node, o_label`, then for every
/// rate and direction (max before min) the seven per-mask fields.
pub fn feature_schema(rates: &RateSet) -> Vec<String> {
    let mut names = vec!["n_num".to_string(), "w_i_node".to_string(), "o_label".to_string()];
    for &r in rates.rates() {
        for dir in Direction::BOTH {
            for field in BLOCK_FIELDS {
                names.push(format!("{field}_{}_{}", dir.name(), rate_label(r)));
            }
        }
    }
    names
}

/// Responses gathered under one `(rate, direction)` mask.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MaskBlock {
    pub i_none: f64,
    pub i_all: f64,
    pub i_step: f64,
    pub n_acc_all: f64,
    pub n_acc_none: f64,
    pub n_acc_avg: f64,
    pub change_p: f64,
}

impl MaskBlock {
    fn values(&self) -> [f64; 7] {
        [
            self.i_none,
            self.i_all,
            self.i_step,
            self.n_acc_all,
            self.n_acc_none,
            self.n_acc_avg,
            self.change_p,
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackFeatureVector {
    pub n_num: usize,
    pub w_i_node: bool,
    pub o_label: usize,
    /// One block per `(rate, direction)`, rates outer, `max` first.
    pub blocks: Vec<MaskBlock>,
}

impl AttackFeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 + 7 * self.blocks.len());
        out.push(self.n_num as f64);
        out.push(f64::from(u8::from(self.w_i_node)));
        out.push(self.o_label as f64);
        for b in &self.blocks {
            out.extend_from_slice(&b.values());
        }
        out
    }
}

/// What the adversary knows about the feature space besides the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtractionParams {
    pub rate_set: RateSet,
    /// `(min, max)` used as replacement values.
    pub extrema: (f64, f64),
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

/// Label-only features for `node` of `graph`.
///
/// Every `(rate, direction)` pair draws one mask of `ceil(rate * dim)` distinct
/// positions, shared by the 0-hop query and the 1-hop drop sequence, so the
/// node costs exactly `2 * |rates| * (2 + degree)` oracle calls.
pub fn extract_attack_features<O: LabelOracle + ?Sized>(
    oracle: &O,
    graph: &Graph,
    node: usize,
    ground_truth: usize,
    neighbor_truths: &[usize],
    params: &ExtractionParams,
    seed: u64,
) -> Result<AttackFeatureVector> {
    if node >= graph.num_nodes() {
        return Err(Error::arg(format!("node {node} out of range")));
    }
    let neighbors = graph.neighbors(node);
    if neighbor_truths.len() != neighbors.len() {
        return Err(Error::arg(format!(
            "{} neighbor truths for {} neighbors of node {node}",
            neighbor_truths.len(),
            neighbors.len()
        )));
    }
    let n_num = neighbors.len();
    let dim = graph.feature_dim();
    let original = graph.feature_row(node);
    let neighbor_rows: Vec<Vec<f64>> = neighbors.iter().map(|&u| graph.feature_row(u).to_vec()).collect();
    let (lo, hi) = params.extrema;

    let mut blocks = Vec::with_capacity(2 * params.rate_set.len());
    for (ri, &rate) in params.rate_set.rates().iter().enumerate() {
        for (di, dir) in Direction::BOTH.into_iter().enumerate() {
            let mut rng = rng_from_seed(derive_seed_path(seed, &[ri as u64, di as u64]));
            // 0.07 * 100 evaluates to 7.000000000000001; without the guard ceil gives 8.
            let k = (((rate * dim as f64) - 1e-9).ceil().max(0.0) as usize).min(dim);
            let fill = if dir == Direction::Max { hi } else { lo };
            let mut masked = original.to_vec();
            let mut changed = 0usize;
            for pos in index::sample(&mut rng, dim, k) {
                if masked[pos] != fill {
                    changed += 1;
                }
                masked[pos] = fill;
            }
            let mut block = MaskBlock {
                change_p: if dim == 0 { 0.0 } else { changed as f64 / dim as f64 },
                ..MaskBlock::default()
            };

            let zero_hop = oracle.query(&SubgraphQuery::isolated(masked.clone()))?;
            block.i_none = f64::from(u8::from(zero_hop[0] == ground_truth));

            let mut connected: Vec<usize> = (0..n_num).collect();
            let star = SubgraphQuery::star(masked, neighbor_rows.clone(), &connected)?;
            let all = oracle.query(&star)?;
            block.i_all = f64::from(u8::from(all[0] == ground_truth));
            block.n_acc_all = accuracy(&all[1..], neighbor_truths);

            if n_num == 0 {
                block.i_step = block.i_all;
            } else {
                let mut order: Vec<usize> = (0..n_num).collect();
                order.shuffle(&mut rng);
                let mut center_hits = 0usize;
                let mut acc_sum = 0.0;
                let mut last_acc = 0.0;
                for &drop in &order {
                    connected.retain(|&c| c != drop);
                    let preds = oracle.query(&star.with_connected(&connected)?)?;
                    center_hits += usize::from(preds[0] == ground_truth);
                    last_acc = accuracy(&preds[1..], neighbor_truths);
                    acc_sum += last_acc;
                }
                block.i_step = center_hits as f64 / n_num as f64;
                block.n_acc_avg = acc_sum / n_num as f64;
                block.n_acc_none = last_acc;
            }
            blocks.push(block);
        }
    }
    Ok(AttackFeatureVector {
        n_num,
        w_i_node: n_num == 0,
        o_label: ground_truth,
        blocks,
    })
}

/// Extracts one record per node. Member nodes get membership 1, the rest 0.
/// Ground truths are the labels of `graph`; each node's extraction seed is
/// derived from `seed` and its index, so records do not depend on input order.
pub fn build_attack_dataset<O: LabelOracle + ?Sized>(
    oracle: &O,
    graph: &Graph,
    members: &[usize],
    nonmembers: &[usize],
    params: &ExtractionParams,
    seed: u64,
) -> Result<AttackDataset> {
    let member_set: HashSet<usize> = members.iter().copied().collect();
    if let Some(v) = nonmembers.iter().find(|v| member_set.contains(v)) {
        return Err(Error::arg(format!("node {v} is both member and non-member")));
    }
    let jobs: Vec<(usize, u8)> = members
        .iter()
        .map(|&v| (v, 1))
        .chain(nonmembers.iter().map(|&v| (v, 0)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(node, membership)| {
            if node >= graph.num_nodes() {
                return Err(Error::arg(format!("node {node} out of range")));
            }
            let truths: Vec<usize> = graph.neighbors(node).iter().map(|&u| graph.label(u)).collect();
            let fv = extract_attack_features(
                oracle,
                graph,
                node,
                graph.label(node),
                &truths,
                params,
                derive_seed(seed, node as u64),
            )?;
            Ok(AttackRecord {
                node,
                membership,
                features: fv.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    AttackDataset::new(feature_schema(&params.rate_set), records)
}
