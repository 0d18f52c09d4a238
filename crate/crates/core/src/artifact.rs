//! Interpretation artifacts: what one repeat of one method produces.

use std::cmp::Ordering;
use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::SampleId;
use crate::error::{Error, Result};

/// Feature indices ordered by descending importance.
///
/// Equal scores are ordered by ascending feature index, so the order is a
/// pure function of the scores.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRanking {
    order: Vec<usize>,
    scores: Vec<f64>,
}

impl FeatureRanking {
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Invalid("ranking over zero features".into()));
        }
        if let Some(j) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Invalid(format!("non-finite importance for feature {j}")));
        }
        let order = order_by_scores(&scores);
        Ok(Self { order, scores })
    }

    /// Ranking from an explicit order; scores are synthesized as `P - rank`.
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let p = order.len();
        let mut scores = vec![f64::NAN; p];
        for (rank, &f) in order.iter().enumerate() {
            if f >= p || !scores[f].is_nan() {
                return Err(Error::Invalid("order is not a permutation of 0..P".into()));
            }
            scores[f] = (p - rank) as f64;
        }
        if p == 0 {
            return Err(Error::Invalid("ranking over zero features".into()));
        }
        Ok(Self { order, scores })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn n_features(&self) -> usize {
        self.order.len()
    }

    pub fn top(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }
}

pub(crate) fn order_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Hard partition of a set of samples into `k` clusters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterLabeling {
    sample_ids: Vec<SampleId>,
    labels: Vec<usize>,
    k: usize,
}

impl ClusterLabeling {
    pub fn new(sample_ids: Vec<SampleId>, labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid("labeling with zero clusters".into()));
        }
        if sample_ids.len() != labels.len() {
            return Err(Error::Invalid("labels and sample ids differ in length".into()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Invalid(format!("label {l} >= k_clusters {k}")));
        }
        Ok(Self { sample_ids, labels, k })
    }

    /// Labeling with `k` inferred as `max(label) + 1`.
    pub fn from_labels(sample_ids: Vec<SampleId>, labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(1, |m| m + 1);
        Self::new(sample_ids, labels, k)
    }

    pub fn sample_ids(&self) -> &[SampleId] {
        &self.sample_ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Labels of the samples in `ids`, in that order. Every id must be present.
    pub fn restrict_to(&self, ids: &[SampleId]) -> Result<Self> {
        let pos: HashMap<&SampleId, usize> = self.sample_ids.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let labels = ids
            .iter()
            .map(|id| pos.get(id).map(|&i| self.labels[i]).ok_or(Error::SampleIdMismatch))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids.to_vec(), labels, self.k)
    }
}

/// Low-dimensional configuration: one row of `coords` per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    sample_ids: Vec<SampleId>,
    coords: DMatrix<f64>,
}

impl Embedding {
    pub fn new(sample_ids: Vec<SampleId>, coords: DMatrix<f64>) -> Result<Self> {
        if coords.ncols() == 0 {
            return Err(Error::Invalid("embedding rank must be >= 1".into()));
        }
        if coords.nrows() != sample_ids.len() {
            return Err(Error::Invalid("embedding rows differ from sample count".into()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("embedding has non-finite coordinates".into()));
        }
        Ok(Self { sample_ids, coords })
    }

    pub fn sample_ids(&self) -> &[SampleId] {
        &self.sample_ids
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn rank(&self) -> usize {
        self.coords.ncols()
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn restrict_to(&self, ids: &[SampleId]) -> Result<Self> {
        let pos: HashMap<&SampleId, usize> = self.sample_ids.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let rows = ids
            .iter()
            .map(|id| pos.get(id).copied().ok_or(Error::SampleIdMismatch))
            .collect::<Result<Vec<_>>>()?;
        let coords = DMatrix::from_fn(rows.len(), self.rank(), |i, j| self.coords[(rows[i], j)]);
        Self::new(ids.to_vec(), coords)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionValues {
    Classes(Vec<usize>),
    Reals(Vec<f64>),
}

impl PredictionValues {
    pub fn len(&self) -> usize {
        match self {
            PredictionValues::Classes(v) => v.len(),
            PredictionValues::Reals(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Test-set predictions aligned with the true targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    sample_ids: Vec<SampleId>,
    predicted: PredictionValues,
    truth: PredictionValues,
}

impl PredictionSet {
    pub fn new(sample_ids: Vec<SampleId>, predicted: PredictionValues, truth: PredictionValues) -> Result<Self> {
        if predicted.len() != sample_ids.len() || truth.len() != sample_ids.len() {
            return Err(Error::Invalid("prediction vectors are not aligned".into()));
        }
        if std::mem::discriminant(&predicted) != std::mem::discriminant(&truth) {
            return Err(Error::Invalid("predictions and truth are of different kinds".into()));
        }
        Ok(Self { sample_ids, predicted, truth })
    }

    /// Classification predictions whose labels must lie in `0..n_classes`.
    pub fn classes(sample_ids: Vec<SampleId>, predicted: Vec<usize>, truth: Vec<usize>, n_classes: usize) -> Result<Self> {
        if predicted.iter().chain(&truth).any(|&c| c >= n_classes) {
            return Err(Error::Invalid("predicted label outside the training alphabet".into()));
        }
        Self::new(sample_ids, PredictionValues::Classes(predicted), PredictionValues::Classes(truth))
    }

    pub fn sample_ids(&self) -> &[SampleId] {
        &self.sample_ids
    }

    pub fn predicted(&self) -> &PredictionValues {
        &self.predicted
    }

    pub fn truth(&self) -> &PredictionValues {
        &self.truth
    }
}

/// One repeat's interpretation.
#[derive(Clone, Debug, PartialEq)]
pub enum Interpretation {
    Ranking(FeatureRanking),
    Labels(ClusterLabeling),
    Embedding(Embedding),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpretationKind {
    FeatureImportance,
    Clustering,
    DimensionReduction,
}

impl Interpretation {
    pub fn kind(&self) -> InterpretationKind {
        match self {
            Interpretation::Ranking(_) => InterpretationKind::FeatureImportance,
            Interpretation::Labels(_) => InterpretationKind::Clustering,
            Interpretation::Embedding(_) => InterpretationKind::DimensionReduction,
        }
    }
}

/// An interpretation tagged with where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpretationArtifact {
    pub method_id: String,
    pub repeat: usize,
    pub seed: u64,
    pub interpretation: Interpretation,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ties_break_by_feature_index() {
        let r = FeatureRanking::from_scores(vec![1.0, 3.0, 1.0, 3.0, 0.0]).unwrap();
        assert_eq!(r.order(), &[1, 3, 0, 2, 4]);
        let zero = FeatureRanking::from_scores(vec![0.0; 4]).unwrap();
        assert_eq!(zero.order(), &[0, 1, 2, 3]);
    }

    #[test]
    fn from_order_rejects_non_permutations() {
        assert!(FeatureRanking::from_order(vec![0, 0, 1]).is_err());
        assert!(FeatureRanking::from_order(vec![0, 3, 1]).is_err());
        let r = FeatureRanking::from_order(vec![2, 0, 1]).unwrap();
        assert_eq!(FeatureRanking::from_scores(r.scores().to_vec()).unwrap(), r);
    }

    #[test]
    fn labeling_invariants() {
        let ids = crate::dataset::sequential_ids(3);
        assert!(ClusterLabeling::new(ids.clone(), vec![0, 1, 2], 2).is_err());
        assert!(ClusterLabeling::new(ids.clone(), vec![0, 1], 2).is_err());
        let l = ClusterLabeling::new(ids, vec![0, 1, 1], 2).unwrap();
        let sub = l.restrict_to(&[SampleId::from(2), SampleId::from(0)]).unwrap();
        assert_eq!(sub.labels(), &[1, 0]);
        assert!(l.restrict_to(&[SampleId::from(9)]).is_err());
    }

    proptest! {
        #[test]
        fn stored_order_matches_recomputed(scores in proptest::collection::vec(0u8..6, 1..30)) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let r = FeatureRanking::from_scores(scores.clone()).unwrap();
            let mut seen = vec![false; scores.len()];
            for &f in r.order() { seen[f] = true; }
            prop_assert!(seen.into_iter().all(|s| s));
            let expected = order_by_scores(&scores);
            prop_assert_eq!(r.order(), expected.as_slice());
            for w in r.order().windows(2) {
                let (a, b) = (w[0], w[1]);
                prop_assert!(scores[a] > scores[b] || (scores[a] == scores[b] && a < b));
            }
        }
    }
}
