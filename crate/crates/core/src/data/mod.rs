//! Dataset ingestion and preparation: on-disk graph bundles, a synthetic
//! block-model generator, feature extrema and the four-way node splits.

mod bundle;
mod sbm;
mod split;

pub use bundle::{load_bundle, save_bundle, BundleManifest, FeatureEncoding, BUNDLE_VERSION};
pub use sbm::{generate_sbm, SbmConfig};
pub use split::{default_partial_train_per_class, sample_split, DatasetSplit, SamplingMethod, SplitSizes};

use crate::graph::Graph;

/// Global scalar minimum and maximum over the whole feature matrix.
/// A graph without feature entries yields `(0, 0)`.
pub fn feature_extrema(graph: &Graph) -> (f64, f64) {
    let data = graph.features().data();
    if data.is_empty() {
        return (0.0, 0.0);
    }
    data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn graph_with(values: Vec<f64>) -> Graph {
        let n = values.len();
        Graph::new(Matrix::from_vec(n, 1, values).unwrap(), vec![0; n], 1, &[]).unwrap()
    }

    #[test]
    fn extrema_examples() {
        assert_eq!(feature_extrema(&graph_with(vec![0.0, 1.0, 1.0, 0.0])), (0.0, 1.0));
        assert_eq!(feature_extrema(&graph_with(vec![0.25; 5])), (0.25, 0.25));
        assert_eq!(feature_extrema(&graph_with(vec![0.0, -2.0, 7.0])), (-2.0, 7.0));
    }
}
