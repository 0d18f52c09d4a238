//! Stability analysis for interpretations of machine-learning methods.
//!
//! A dataset is perturbed repeatedly ([`perturb`]), each perturbed copy is
//! interpreted by a learner ([`learners`]) as a feature ranking, a clustering
//! or an embedding ([`artifact`]), and the repeats are compared with rank,
//! partition or neighbourhood metrics ([`rankmetrics`], [`partmetrics`],
//! [`nnmetrics`]) and aggregated in [`stability`].

pub mod artifact;
pub mod dataset;
pub mod error;
pub mod learners;
pub mod methods;
pub mod nnmetrics;
pub mod partmetrics;
pub mod perturb;
pub mod rankmetrics;
pub mod rng;
pub mod stability;
pub mod stats;

pub use artifact::{ClusterLabeling, Embedding, FeatureRanking, Interpretation, InterpretationKind, PredictionSet};
pub use dataset::{SampleId, TabularDataset, TaskKind, Target};
pub use error::{Error, Result};
