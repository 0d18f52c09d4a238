//! Built-in methods addressed by name, with their hyperparameters.
//!
//! [`run`] turns one (possibly perturbed) training set into an
//! interpretation and, for supervised methods with a test set, predictions.

use serde::{Deserialize, Serialize};

use crate::artifact::{ClusterLabeling, Embedding, Interpretation, InterpretationKind};
use crate::dataset::{SampleId, TabularDataset, Target};
use crate::error::{invalid, Result};
use crate::learners::embed::DEFAULT_ISOMAP_NEIGHBORS;
use crate::learners::kmeans::{MiniBatchParams, DEFAULT_BATCH_SIZE, DEFAULT_MAX_ITER, DEFAULT_MINIBATCH_STEPS, DEFAULT_N_INIT};
use crate::learners::linear::DEFAULT_FOLDS;
use crate::learners::permutation::DEFAULT_REPEATS;
use crate::learners::{self, Affinity, DistanceMetric, KMeansInit, KMeansParams, Linkage, Penalty, Predictor};

fn folds() -> usize {
    DEFAULT_FOLDS
}
fn perm_repeats() -> usize {
    DEFAULT_REPEATS
}
fn l2() -> Penalty {
    Penalty::L2
}
fn kmeanspp() -> KMeansInit {
    KMeansInit::KMeansPlusPlus
}
fn n_init() -> usize {
    DEFAULT_N_INIT
}
fn max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn mb_steps() -> usize {
    DEFAULT_MINIBATCH_STEPS
}
fn euclidean() -> DistanceMetric {
    DistanceMetric::Euclidean
}
fn isomap_neighbors() -> usize {
    DEFAULT_ISOMAP_NEIGHBORS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinMethod {
    Ridge {
        #[serde(default = "folds")]
        folds: usize,
    },
    Lasso {
        #[serde(default = "folds")]
        folds: usize,
    },
    /// Permutation importance of a cross-validated linear model.
    Permutation {
        #[serde(default = "l2")]
        model: Penalty,
        #[serde(default = "perm_repeats")]
        repeats: usize,
        #[serde(default = "folds")]
        folds: usize,
    },
    Kmeans {
        #[serde(default = "kmeanspp")]
        init: KMeansInit,
        #[serde(default = "n_init")]
        n_init: usize,
        #[serde(default = "max_iter")]
        max_iter: usize,
    },
    MinibatchKmeans {
        #[serde(default = "batch_size")]
        batch_size: usize,
        #[serde(default = "mb_steps")]
        max_iter: usize,
    },
    Hierarchical {
        linkage: Linkage,
        #[serde(default = "euclidean")]
        metric: DistanceMetric,
    },
    Spectral {
        #[serde(default)]
        affinity: Affinity,
    },
    Pca,
    RandomProjection,
    Mds,
    Isomap {
        #[serde(default = "isomap_neighbors")]
        n_neighbors: usize,
    },
    SpectralEmbedding {
        #[serde(default)]
        affinity: Affinity,
    },
}

impl BuiltinMethod {
    /// Parses either a bare name (`"pca"`) or a JSON object.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let json = if text.starts_with('{') { text.to_owned() } else { format!("{{\"method\":\"{text}\"}}") };
        serde_json::from_str(&json).map_err(|e| crate::error::Error::Invalid(format!("unknown method spec `{text}`: {e}")))
    }

    pub fn kind(&self) -> InterpretationKind {
        use BuiltinMethod::*;
        match self {
            Ridge { .. } | Lasso { .. } | Permutation { .. } => InterpretationKind::FeatureImportance,
            Kmeans { .. } | MinibatchKmeans { .. } | Hierarchical { .. } | Spectral { .. } => InterpretationKind::Clustering,
            Pca | RandomProjection | Mds | Isomap { .. } | SpectralEmbedding { .. } => InterpretationKind::DimensionReduction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BuiltinMethod::Hierarchical { linkage, metric } => linkage.check(*metric),
            BuiltinMethod::Ridge { folds } | BuiltinMethod::Lasso { folds } | BuiltinMethod::Permutation { folds, .. }
                if *folds < 2 =>
            {
                invalid("cross-validation needs at least 2 folds")
            }
            _ => Ok(()),
        }
    }

    /// Canonical JSON used in content hashes and artifact provenance.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("method specs serialize")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PredictedValues {
    /// Class names from the training alphabet.
    Labels(Vec<String>),
    Reals(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub sample_ids: Vec<SampleId>,
    pub values: PredictedValues,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodOutput {
    pub interpretation: Interpretation,
    pub predictions: Option<Predictions>,
    pub notes: Vec<String>,
}

/// What a method needs besides the data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MethodInputs {
    pub k_clusters: Option<usize>,
    pub rank: Option<usize>,
    pub seed: u64,
}

fn predictions(model: &dyn Predictor, train: &TabularDataset, test: &TabularDataset) -> Predictions {
    let raw = model.predict(test.features());
    let values = match train.target() {
        Some(Target::Class { classes, .. }) => {
            PredictedValues::Labels(raw.iter().map(|&c| classes[c as usize].clone()).collect())
        }
        _ => PredictedValues::Reals(raw),
    };
    Predictions { sample_ids: test.samples().to_vec(), values }
}

pub fn run(method: &BuiltinMethod, train: &TabularDataset, test: Option<&TabularDataset>, inputs: MethodInputs) -> Result<MethodOutput> {
    method.validate()?;
    let x = train.features();
    let ids = train.samples().to_vec();
    let need_k = || inputs.k_clusters.ok_or_else(|| crate::error::Error::Invalid("clustering needs k_clusters".into()));
    let need_r = || inputs.rank.ok_or_else(|| crate::error::Error::Invalid("dimension reduction needs rank".into()));
    let labels = |l: Vec<usize>, k: usize| -> Result<MethodOutput> {
        Ok(MethodOutput { interpretation: Interpretation::Labels(ClusterLabeling::new(ids.clone(), l, k)?), predictions: None, notes: vec![] })
    };
    let embedding = |m: nalgebra::DMatrix<f64>, notes: Vec<String>| -> Result<MethodOutput> {
        Ok(MethodOutput { interpretation: Interpretation::Embedding(Embedding::new(ids.clone(), m)?), predictions: None, notes })
    };
    match method {
        BuiltinMethod::Ridge { folds } | BuiltinMethod::Lasso { folds } => {
            let penalty = if matches!(method, BuiltinMethod::Ridge { .. }) { Penalty::L2 } else { Penalty::L1 };
            let model = learners::fit_linear(train, penalty, *folds)?;
            Ok(MethodOutput {
                interpretation: Interpretation::Ranking(model.ranking()?),
                predictions: test.map(|t| predictions(&model, train, t)),
                notes: vec![],
            })
        }
        BuiltinMethod::Permutation { model, repeats, folds } => {
            let fitted = learners::fit_linear(train, *model, *folds)?;
            let eval = test.unwrap_or(train);
            let eval = match (train.target(), eval.target()) {
                // Score on the training alphabet so class indices agree with the model.
                (Some(Target::Class { classes, .. }), Some(Target::Class { .. })) => relabel(eval, classes)?,
                _ => eval.clone(),
            };
            let ranking = learners::permutation_importance(&fitted, &eval, *repeats, inputs.seed)?;
            Ok(MethodOutput {
                interpretation: Interpretation::Ranking(ranking),
                predictions: test.map(|t| predictions(&fitted, train, t)),
                notes: vec![],
            })
        }
        BuiltinMethod::Kmeans { init, n_init, max_iter } => {
            let k = need_k()?;
            let params = KMeansParams { k, init: *init, max_iter: *max_iter, n_init: *n_init, seed: inputs.seed };
            labels(learners::kmeans(x, &params)?.labels, k)
        }
        BuiltinMethod::MinibatchKmeans { batch_size, max_iter } => {
            let k = need_k()?;
            let params = MiniBatchParams { batch_size: *batch_size, max_iter: *max_iter, ..MiniBatchParams::new(k, inputs.seed) };
            labels(learners::minibatch_kmeans(x, &params)?.labels, k)
        }
        BuiltinMethod::Hierarchical { linkage, metric } => {
            let k = need_k()?;
            labels(learners::hierarchical(x, k, *linkage, *metric)?, k)
        }
        BuiltinMethod::Spectral { affinity } => {
            let k = need_k()?;
            labels(learners::spectral_cluster(x, k, *affinity, inputs.seed)?, k)
        }
        BuiltinMethod::Pca => embedding(learners::pca(x, need_r()?)?, vec![]),
        BuiltinMethod::RandomProjection => embedding(learners::random_projection(x, need_r()?, inputs.seed)?, vec![]),
        BuiltinMethod::Mds => {
            let fit = learners::metric_mds(x, need_r()?)?;
            embedding(fit.value, fit.notes)
        }
        BuiltinMethod::Isomap { n_neighbors } => {
            let fit = learners::isomap(x, need_r()?, *n_neighbors)?;
            embedding(fit.value, fit.notes)
        }
        BuiltinMethod::SpectralEmbedding { affinity } => {
            let fit = learners::spectral_embedding(x, need_r()?, *affinity)?;
            embedding(fit.value, fit.notes)
        }
    }
}

/// The dataset with its class labels re-expressed in `alphabet`; classes
/// unseen in the alphabet get indices past its end.
fn relabel(ds: &TabularDataset, alphabet: &[String]) -> Result<TabularDataset> {
    let Some(Target::Class { labels, classes }) = ds.target() else {
        return Ok(ds.clone());
    };
    let mut all = alphabet.to_vec();
    let mapped = labels
        .iter()
        .map(|&l| {
            let name = &classes[l];
            all.iter().position(|c| c == name).unwrap_or_else(|| {
                all.push(name.clone());
                all.len() - 1
            })
        })
        .collect();
    TabularDataset::new(
        ds.samples().to_vec(),
        ds.features().clone(),
        ds.feature_names().to_vec(),
        Some(Target::Class { labels: mapped, classes: all }),
        ds.task(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{sequential_ids, TaskKind};
    use nalgebra::DMatrix;

    #[test]
    fn parse_names_and_objects() {
        assert_eq!(BuiltinMethod::parse("pca").unwrap(), BuiltinMethod::Pca);
        assert_eq!(BuiltinMethod::parse("ridge").unwrap(), BuiltinMethod::Ridge { folds: 5 });
        let hc = BuiltinMethod::parse(r#"{"method":"hierarchical","linkage":"single","metric":"cosine"}"#).unwrap();
        assert_eq!(hc, BuiltinMethod::Hierarchical { linkage: Linkage::Single, metric: DistanceMetric::Cosine });
        assert!(BuiltinMethod::parse("tsne").is_err());
        let ward = BuiltinMethod::parse(r#"{"method":"hierarchical","linkage":"ward","metric":"manhattan"}"#).unwrap();
        assert!(ward.validate().is_err());
        let back = BuiltinMethod::parse(&hc.canonical()).unwrap();
        assert_eq!(back, hc);
    }

    #[test]
    fn classification_predictions_use_names() {
        let n = 40;
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { (i % 2) as f64 * 4.0 + (i as f64 * 0.01) } else { (i % 3) as f64 });
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let ds = TabularDataset::new(
            sequential_ids(n),
            x,
            vec!["a".into(), "b".into()],
            Some(Target::Class { labels, classes: vec!["no".into(), "yes".into()] }),
            TaskKind::Classification,
        )
        .unwrap();
        let train = ds.select_rows(&(0..30).collect::<Vec<_>>()).unwrap();
        let test = ds.select_rows(&(30..40).collect::<Vec<_>>()).unwrap();
        for m in [BuiltinMethod::parse("ridge").unwrap(), BuiltinMethod::parse("permutation").unwrap()] {
            let out = run(&m, &train, Some(&test), MethodInputs { k_clusters: None, rank: None, seed: 1 }).unwrap();
            let Some(Predictions { values: PredictedValues::Labels(p), .. }) = out.predictions else { panic!() };
            let expect: Vec<String> = (30..40).map(|i| if i % 2 == 0 { "no" } else { "yes" }.to_string()).collect();
            assert_eq!(p, expect);
            let Interpretation::Ranking(r) = out.interpretation else { panic!() };
            assert_eq!(r.order()[0], 0);
        }
    }

    #[test]
    fn missing_inputs_error() {
        let ds = TabularDataset::from_matrix(DMatrix::from_fn(6, 2, |i, j| (i + j) as f64)).unwrap();
        let none = MethodInputs { k_clusters: None, rank: None, seed: 0 };
        assert!(run(&BuiltinMethod::parse("kmeans").unwrap(), &ds, None, none).is_err());
        assert!(run(&BuiltinMethod::Pca, &ds, None, none).is_err());
        let ok = run(&BuiltinMethod::Pca, &ds, None, MethodInputs { rank: Some(2), ..none }).unwrap();
        assert_eq!(ok.interpretation.kind(), InterpretationKind::DimensionReduction);
    }
}
