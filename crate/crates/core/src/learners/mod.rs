//! Built-in interpreters: linear and permutation feature importance,
//! clustering, and dimension reduction.
//!
//! Every learner is a pure function of its inputs and seed.

use nalgebra::DMatrix;

pub mod distance;
pub mod embed;
pub mod hierarchical;
pub mod kmeans;
pub(crate) mod linalg;
pub mod linear;
pub mod permutation;
pub mod spectral;

pub use distance::DistanceMetric;
pub use embed::{isomap, metric_mds, pca, random_projection, random_projection_with};
pub use hierarchical::{hierarchical, Linkage, MergeTree};
pub use kmeans::{kmeans, minibatch_kmeans, KMeansFit, KMeansInit, KMeansParams, MiniBatchParams};
pub use linear::{fit_lasso, fit_linear, fit_ridge, LinearModel, LinearModelFit, Penalty};
pub use permutation::permutation_importance;
pub use spectral::{spectral_cluster, spectral_embedding, Affinity};

/// Anything that maps a feature matrix to one prediction per row.
///
/// Classifiers return class indices encoded as `f64`.
pub trait Predictor {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64>;

    fn is_classifier(&self) -> bool;
}

/// A learner result together with non-fatal diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Fitted<T> {
    pub value: T,
    pub notes: Vec<String>,
}

impl<T> Fitted<T> {
    pub fn clean(value: T) -> Self {
        Self { value, notes: Vec::new() }
    }
}
