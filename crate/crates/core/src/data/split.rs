use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    #[default]
    Random,
    Balanced,
    PartiallyBalanced,
}

impl SamplingMethod {
    pub const ALL: [SamplingMethod; 3] = [Self::Random, Self::Balanced, Self::PartiallyBalanced];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Balanced => "balanced",
            Self::PartiallyBalanced => "partially_balanced",
        }
    }
}

impl fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown sampling method {s:?}")))
    }
}

/// Optional size overrides.
///
/// * random: `set_size` nodes in each of the four sets.
/// * balanced: `per_class` nodes of every class in each set.
/// * partially balanced: `per_class` nodes of every class in each train set,
///   `set_size` nodes in each test set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub per_class: Option<usize>,
    pub set_size: Option<usize>,
}

/// Four pairwise-disjoint node sets; each is sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub target_train: Vec<usize>,
    pub target_test: Vec<usize>,
    pub shadow_train: Vec<usize>,
    pub shadow_test: Vec<usize>,
    pub sampling_method: SamplingMethod,
    pub seed: u64,
}

impl DatasetSplit {
    /// Sets in the order target train, target test, shadow train, shadow test.
    pub fn sets(&self) -> [&[usize]; 4] {
        [
            &self.target_train,
            &self.target_test,
            &self.shadow_train,
            &self.shadow_test,
        ]
    }

    pub fn sizes(&self) -> [usize; 4] {
        self.sets().map(|s| s.len())
    }

    /// Union of the target train and test sets, ascending.
    pub fn target_nodes(&self) -> Vec<usize> {
        merged(&self.target_train, &self.target_test)
    }

    /// Union of the shadow train and test sets, ascending.
    pub fn shadow_nodes(&self) -> Vec<usize> {
        merged(&self.shadow_train, &self.shadow_test)
    }

    /// Checks disjointness and that every index is a node of `graph`.
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        let mut owner = vec![usize::MAX; graph.num_nodes()];
        for (s, set) in self.sets().iter().enumerate() {
            for &v in *set {
                if v >= owner.len() {
                    return Err(Error::arg(format!("split references node {v} >= {}", owner.len())));
                }
                if owner[v] != usize::MAX {
                    return Err(Error::arg(format!("node {v} appears in sets {} and {s}", owner[v])));
                }
                owner[v] = s;
            }
        }
        Ok(())
    }

    /// Per-class counts of each set.
    pub fn class_histograms(&self, graph: &Graph) -> [Vec<usize>; 4] {
        self.sets().map(|set| {
            let mut h = vec![0; graph.num_classes()];
            for &v in set {
                h[graph.label(v)] += 1;
            }
            h
        })
    }
}

fn merged(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out
}

fn nodes_by_class(graph: &Graph) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); graph.num_classes()];
    for v in 0..graph.num_nodes() {
        by_class[graph.label(v)].push(v);
    }
    by_class
}

fn smallest_class(counts: &[usize]) -> (usize, usize) {
    counts
        .iter()
        .copied()
        .enumerate()
        .min_by_key(|&(c, n)| (n, c))
        .unwrap_or((0, 0))
}

/// Default per-class train count for the partially balanced method:
/// `floor(0.45 * smallest class)`, capped at `floor(N / 4C)` so that the
/// remaining nodes can fill two test sets of the same total size.
pub fn default_partial_train_per_class(graph: &Graph) -> usize {
    let (_, min_count) = smallest_class(&graph.class_counts());
    let by_fraction = (min_count as f64 * 0.45).floor() as usize;
    by_fraction.min(graph.num_nodes() / (4 * graph.num_classes().max(1)))
}

/// Partitions nodes into target/shadow train/test sets.
///
/// The random method uses every node: with `N = 4q + r`, the first `r` sets
/// (in [`DatasetSplit::sets`] order) receive `q + 1` nodes.
pub fn sample_split(graph: &Graph, method: SamplingMethod, sizes: SplitSizes, seed: u64) -> Result<DatasetSplit> {
    let mut rng = rng_from_seed(seed);
    let n = graph.num_nodes();
    let counts = graph.class_counts();
    let mut sets: [Vec<usize>; 4] = Default::default();
    match method {
        SamplingMethod::Random => {
            if sizes.per_class.is_some() {
                return Err(Error::arg("the random method takes no per-class size"));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let lens: [usize; 4] = match sizes.set_size {
                Some(s) => {
                    if 4 * s > n {
                        return Err(Error::arg(format!(
                            "four sets of {s} need {} nodes, graph has {n}",
                            4 * s
                        )));
                    }
                    [s; 4]
                }
                None => std::array::from_fn(|i| n / 4 + usize::from(i < n % 4)),
            };
            let mut start = 0;
            for (set, len) in sets.iter_mut().zip(lens) {
                *set = order[start..start + len].to_vec();
                start += len;
            }
        }
        SamplingMethod::Balanced => {
            if sizes.set_size.is_some() {
                return Err(Error::arg("the balanced method sizes sets per class"));
            }
            let (min_class, min_count) = smallest_class(&counts);
            let m = sizes.per_class.unwrap_or(min_count / 4);
            if m == 0 || 4 * m > min_count {
                return Err(Error::arg(format!(
                    "balanced split with {m} per class per set needs {} nodes of every class; class {min_class} has {min_count}",
                    (4 * m).max(4)
                )));
            }
            for mut members in nodes_by_class(graph) {
                members.shuffle(&mut rng);
                for (k, set) in sets.iter_mut().enumerate() {
                    set.extend_from_slice(&members[k * m..(k + 1) * m]);
                }
            }
        }
        SamplingMethod::PartiallyBalanced => {
            let (min_class, min_count) = smallest_class(&counts);
            let m = sizes
                .per_class
                .unwrap_or_else(|| default_partial_train_per_class(graph));
            if m == 0 || 2 * m > min_count {
                return Err(Error::arg(format!(
                    "two train sets with {m} per class need {} nodes of every class; class {min_class} has {min_count}",
                    (2 * m).max(2)
                )));
            }
            let mut remainder = Vec::new();
            for mut members in nodes_by_class(graph) {
                members.shuffle(&mut rng);
                sets[0].extend_from_slice(&members[..m]);
                sets[2].extend_from_slice(&members[m..2 * m]);
                remainder.extend_from_slice(&members[2 * m..]);
            }
            let t = sizes.set_size.unwrap_or(m * graph.num_classes());
            if t == 0 || 2 * t > remainder.len() {
                return Err(Error::arg(format!(
                    "two test sets of {t} nodes need {} nodes outside the train sets, {} remain",
                    (2 * t).max(2),
                    remainder.len()
                )));
            }
            remainder.sort_unstable();
            remainder.shuffle(&mut rng);
            sets[1] = remainder[..t].to_vec();
            sets[3] = remainder[t..2 * t].to_vec();
        }
    }
    for set in &mut sets {
        set.sort_unstable();
    }
    let [target_train, target_test, shadow_train, shadow_test] = sets;
    Ok(DatasetSplit {
        target_train,
        target_test,
        shadow_train,
        shadow_test,
        sampling_method: method,
        seed,
    })
}
