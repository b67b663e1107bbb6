//! Posterior-based reference attacks. These need a [`PosteriorOracle`] and are
//! kept apart from the label-only pipeline.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::{AttackDataset, AttackRecord};
use crate::error::{Error, Result};
use crate::graph::{Graph, PosteriorOracle, SubgraphQuery};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineVariant {
    Hop0,
    Hop2,
    Combined,
    AllProb,
}

impl BaselineVariant {
    pub const ALL: [BaselineVariant; 4] = [Self::Hop0, Self::Hop2, Self::Combined, Self::AllProb];

    pub fn name(self) -> &'static str {
        match self {
            Self::Hop0 => "hop0",
            Self::Hop2 => "hop2",
            Self::Combined => "combined",
            Self::AllProb => "all_prob",
        }
    }

    pub fn columns(self, num_classes: usize) -> Vec<String> {
        let top2 = |p: &str| vec![format!("{p}_top1"), format!("{p}_top2")];
        match self {
            Self::Hop0 => top2("hop0"),
            Self::Hop2 => top2("hop2"),
            Self::Combined => [top2("hop0"), top2("hop2")].concat(),
            Self::AllProb => (0..num_classes).map(|c| format!("prob_{c}")).collect(),
        }
    }
}

impl fmt::Display for BaselineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown baseline {s:?}")))
    }
}

fn top2(row: &[f64]) -> Vec<f64> {
    let mut v = row.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.resize(2, 0.0);
    v
}

fn hop0<O: PosteriorOracle + ?Sized>(oracle: &O, graph: &Graph, node: usize) -> Result<Vec<f64>> {
    let p = oracle.query(&SubgraphQuery::isolated(graph.feature_row(node).to_vec()))?;
    Ok(top2(p.row(0)))
}

fn hop2<O: PosteriorOracle + ?Sized>(oracle: &O, graph: &Graph, node: usize) -> Result<Vec<f64>> {
    let mut nodes = graph.khop_neighbors(node, 2)?;
    nodes.push(node);
    let sub = graph.induced_subgraph(&nodes)?;
    let p = oracle.query_graph(&sub.graph)?;
    Ok(top2(
        p.row(sub.to_new(node).expect("center is in its own neighborhood")),
    ))
}

/// Posterior features of one node. `AllProb` feeds the whole of `graph`; use
/// [`baseline_dataset`] to share that query across nodes.
pub fn baseline_features<O: PosteriorOracle + ?Sized>(
    oracle: &O,
    graph: &Graph,
    node: usize,
    variant: BaselineVariant,
) -> Result<Vec<f64>> {
    if node >= graph.num_nodes() {
        return Err(Error::arg(format!("node {node} out of range")));
    }
    match variant {
        BaselineVariant::Hop0 => hop0(oracle, graph, node),
        BaselineVariant::Hop2 => hop2(oracle, graph, node),
        BaselineVariant::Combined => Ok([hop0(oracle, graph, node)?, hop2(oracle, graph, node)?].concat()),
        BaselineVariant::AllProb => Ok(oracle.query_graph(graph)?.row(node).to_vec()),
    }
}

pub fn baseline_dataset<O: PosteriorOracle + ?Sized>(
    oracle: &O,
    graph: &Graph,
    members: &[usize],
    nonmembers: &[usize],
    variant: BaselineVariant,
) -> Result<AttackDataset> {
    let member_set: HashSet<usize> = members.iter().copied().collect();
    if let Some(v) = nonmembers.iter().find(|v| member_set.contains(v)) {
        return Err(Error::arg(format!("node {v} is both member and non-member")));
    }
    if let Some(v) = members.iter().chain(nonmembers).find(|&&v| v >= graph.num_nodes()) {
        return Err(Error::arg(format!("node {v} out of range")));
    }
    let jobs: Vec<(usize, u8)> = members
        .iter()
        .map(|&v| (v, 1))
        .chain(nonmembers.iter().map(|&v| (v, 0)))
        .collect();
    let full = match variant {
        BaselineVariant::AllProb => Some(oracle.query_graph(graph)?),
        _ => None,
    };
    let records = jobs
        .par_iter()
        .map(|&(node, membership)| {
            let features = match &full {
                Some(p) => p.row(node).to_vec(),
                None => baseline_features(oracle, graph, node, variant)?,
            };
            Ok(AttackRecord {
                node,
                membership,
                features,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    AttackDataset::new(variant.columns(oracle.num_classes()), records)
}
