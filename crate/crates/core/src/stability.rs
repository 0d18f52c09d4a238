//! Aggregation of pairwise metrics into stability scores.
//!
//! Within-method stability is the mean over all unordered pairs of repeats.
//! Between-method stability is the mean over aligned repeats of two methods
//! that saw identical data. Prediction stability summarizes how much each
//! test sample's prediction varies across the repeats that held it out.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::artifact::{ClusterLabeling, Interpretation, PredictionSet, PredictionValues};
use crate::dataset::SampleId;
use crate::error::{invalid, Error, Result};
use crate::nnmetrics;
use crate::partmetrics::PartitionMetric;
use crate::rankmetrics::{self, RankMetric, TopKParams};

/// How to compare two interpretations of the same kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PairScorer {
    Rank { metric: RankMetric, params: TopKParams },
    Partition { metric: PartitionMetric },
    Neighbors { grid_size: usize, sample_cap: usize, seed: u64 },
}

impl PairScorer {
    pub fn metric_id(&self) -> String {
        match self {
            PairScorer::Rank { metric, params } => format!("{}@{}", metric.name(), params.k),
            PairScorer::Partition { metric } => metric.name().to_string(),
            PairScorer::Neighbors { .. } => "nn_jaccard_auc".to_string(),
        }
    }
}

fn intersect_ids(a: &[SampleId], b: &[SampleId]) -> Vec<SampleId> {
    let in_b: std::collections::HashSet<&SampleId> = b.iter().collect();
    let mut common: Vec<SampleId> = a.iter().filter(|id| in_b.contains(id)).cloned().collect();
    common.sort();
    common
}

fn same_ids(a: &[SampleId], b: &[SampleId]) -> bool {
    a == b
}

/// Score of one pair, or `None` when the two share fewer than two samples.
///
/// Labelings and embeddings over different sample sets are compared on
/// their common samples only.
pub fn pair_score(scorer: &PairScorer, a: &Interpretation, b: &Interpretation) -> Result<Option<f64>> {
    match (scorer, a, b) {
        (PairScorer::Rank { metric, params }, Interpretation::Ranking(x), Interpretation::Ranking(y)) => {
            rankmetrics::score(*metric, x, y, *params).map(Some)
        }
        (PairScorer::Partition { metric }, Interpretation::Labels(x), Interpretation::Labels(y)) => {
            if same_ids(x.sample_ids(), y.sample_ids()) {
                return metric.score(x, y).map(Some);
            }
            let common = intersect_ids(x.sample_ids(), y.sample_ids());
            if common.len() < 2 {
                return Ok(None);
            }
            metric.score(&x.restrict_to(&common)?, &y.restrict_to(&common)?).map(Some)
        }
        (PairScorer::Neighbors { grid_size, sample_cap, seed }, Interpretation::Embedding(x), Interpretation::Embedding(y)) => {
            let (x, y) = if same_ids(x.sample_ids(), y.sample_ids()) {
                (x.clone(), y.clone())
            } else {
                let common = intersect_ids(x.sample_ids(), y.sample_ids());
                if common.len() < 2 {
                    return Ok(None);
                }
                (x.restrict_to(&common)?, y.restrict_to(&common)?)
            };
            Ok(Some(nnmetrics::nn_jaccard_auc(&x, &y, *grid_size, *sample_cap, *seed)?.auc))
        }
        _ => invalid(format!(
            "scorer {} cannot compare {:?} with {:?}",
            scorer.metric_id(),
            a.kind(),
            b.kind()
        )),
    }
}

/// One aggregated stability value with its bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    /// `None` marks a missing cell.
    pub mean: Option<f64>,
    pub n_repeats: usize,
    pub n_pairs: usize,
    pub n_skipped: usize,
    pub metric: String,
}

/// Mean of `scorer` over all C(R, 2) pairs of `artifacts`.
pub fn within_method(artifacts: &[Interpretation], scorer: &PairScorer) -> Result<CellScore> {
    let r = artifacts.len();
    if r < 2 {
        return invalid(format!("within-method stability needs at least 2 repeats, got {r}"));
    }
    let mut sum = 0.0;
    let mut pairs = 0;
    let mut skipped = 0;
    for i in 0..r {
        for j in i + 1..r {
            match pair_score(scorer, &artifacts[i], &artifacts[j])? {
                Some(v) => {
                    sum += v;
                    pairs += 1;
                }
                None => skipped += 1,
            }
        }
    }
    Ok(CellScore {
        mean: (pairs > 0).then(|| sum / pairs as f64),
        n_repeats: r,
        n_pairs: pairs,
        n_skipped: skipped,
        metric: scorer.metric_id(),
    })
}

/// Mean of `scorer(a[i], b[i])` over aligned repeats of two methods.
///
/// Both sequences must come from the same perturbation plan, identified by
/// its fingerprint.
pub fn between_method(
    a: &[Interpretation],
    plan_a: u64,
    b: &[Interpretation],
    plan_b: u64,
    scorer: &PairScorer,
) -> Result<CellScore> {
    if plan_a != plan_b {
        return invalid(format!("perturbation plans differ ({plan_a:016x} vs {plan_b:016x})"));
    }
    if a.len() != b.len() || a.is_empty() {
        return invalid("between-method stability needs equally many aligned repeats");
    }
    let mut sum = 0.0;
    let mut pairs = 0;
    let mut skipped = 0;
    for (x, y) in a.iter().zip(b) {
        match pair_score(scorer, x, y)? {
            Some(v) => {
                sum += v;
                pairs += 1;
            }
            None => skipped += 1,
        }
    }
    Ok(CellScore {
        mean: (pairs > 0).then(|| sum / pairs as f64),
        n_repeats: a.len(),
        n_pairs: pairs,
        n_skipped: skipped,
        metric: scorer.metric_id(),
    })
}

/// Whether too many repeats failed for a cell to be reported (more than half).
pub fn too_many_failures(total: usize, succeeded: usize) -> bool {
    2 * (total - succeeded.min(total)) > total
}

/// exp(−entropy) of one sample's predicted labels.
pub fn label_agreement(labels: &[usize]) -> f64 {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    let mut sorted: Vec<usize> = counts.into_values().collect();
    sorted.sort_unstable();
    let entropy: f64 = sorted.iter().map(|&c| {
        let p = c as f64 / n;
        -p * p.ln()
    }).sum();
    (-entropy).exp()
}

/// exp(−sd) with ddof = 1.
pub fn value_agreement(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (-var.sqrt()).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionStability {
    pub per_sample: Vec<(SampleId, f64)>,
    pub mean: Option<f64>,
    /// Samples predicted in fewer than two repeats.
    pub excluded: usize,
}

enum Gathered {
    Classes(Vec<(SampleId, Vec<usize>)>),
    Reals(Vec<(SampleId, Vec<f64>)>),
}

/// Predictions grouped by sample, in order of first appearance.
fn gather(sets: &[PredictionSet]) -> Result<Gathered> {
    let Some(first) = sets.first() else {
        return invalid("no prediction sets");
    };
    let mut index: HashMap<SampleId, usize> = HashMap::new();
    let mut ids: Vec<SampleId> = Vec::new();
    let mut slot = |id: &SampleId, ids: &mut Vec<SampleId>| -> usize {
        *index.entry(id.clone()).or_insert_with(|| {
            ids.push(id.clone());
            ids.len() - 1
        })
    };
    match first.predicted() {
        PredictionValues::Classes(_) => {
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for s in sets {
                let PredictionValues::Classes(v) = s.predicted() else {
                    return invalid("mixed prediction kinds");
                };
                for (id, &l) in s.sample_ids().iter().zip(v) {
                    let k = slot(id, &mut ids);
                    if k == groups.len() {
                        groups.push(Vec::new());
                    }
                    groups[k].push(l);
                }
            }
            Ok(Gathered::Classes(ids.into_iter().zip(groups).collect()))
        }
        PredictionValues::Reals(_) => {
            let mut groups: Vec<Vec<f64>> = Vec::new();
            for s in sets {
                let PredictionValues::Reals(v) = s.predicted() else {
                    return invalid("mixed prediction kinds");
                };
                for (id, &x) in s.sample_ids().iter().zip(v) {
                    let k = slot(id, &mut ids);
                    if k == groups.len() {
                        groups.push(Vec::new());
                    }
                    groups[k].push(x);
                }
            }
            Ok(Gathered::Reals(ids.into_iter().zip(groups).collect()))
        }
    }
}

fn summarize<T>(groups: Vec<(SampleId, Vec<T>)>, score: impl Fn(&[T]) -> f64) -> PredictionStability {
    let mut per_sample = Vec::with_capacity(groups.len());
    let mut excluded = 0;
    for (id, values) in groups {
        if values.len() < 2 {
            excluded += 1;
        } else {
            per_sample.push((id, score(&values)));
        }
    }
    let mean = (!per_sample.is_empty()).then(|| per_sample.iter().map(|p| p.1).sum::<f64>() / per_sample.len() as f64);
    PredictionStability { per_sample, mean, excluded }
}

/// exp(−entropy) per test sample over the repeats that held it out.
pub fn prediction_stability_classification(groups: Vec<(SampleId, Vec<usize>)>) -> PredictionStability {
    summarize(groups, label_agreement)
}

/// exp(−sd) per test sample over the repeats that held it out.
pub fn prediction_stability_regression(groups: Vec<(SampleId, Vec<f64>)>) -> PredictionStability {
    summarize(groups, value_agreement)
}

/// Prediction stability straight from per-repeat prediction sets.
pub fn prediction_stability(sets: &[PredictionSet]) -> Result<PredictionStability> {
    Ok(match gather(sets)? {
        Gathered::Classes(g) => prediction_stability_classification(g),
        Gathered::Reals(g) => prediction_stability_regression(g),
    })
}

fn check_aligned(a: &PredictionSet, b: &PredictionSet) -> Result<()> {
    if a.sample_ids() != b.sample_ids() {
        return Err(Error::SampleIdMismatch);
    }
    Ok(())
}

/// Mean over repeats of the fraction of equal predicted labels.
pub fn between_prediction_classification(a: &[PredictionSet], b: &[PredictionSet]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return invalid("need equally many aligned repeats");
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        check_aligned(x, y)?;
        let (PredictionValues::Classes(p), PredictionValues::Classes(q)) = (x.predicted(), y.predicted()) else {
            return invalid("label agreement needs class predictions");
        };
        let same = p.iter().zip(q).filter(|(u, v)| u == v).count();
        total += same as f64 / p.len() as f64;
    }
    Ok(total / a.len() as f64)
}

fn mse(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / p.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseNormalization {
    /// Min-max across all method pairs within one repeat.
    #[default]
    PerRepeat,
    /// Min-max across repeats within one method pair.
    PerPair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetweenRegression {
    /// `scores[i][j]` for methods i and j; the diagonal is 1.
    pub scores: Vec<Vec<f64>>,
    /// Set when some normalization had all MSEs equal.
    pub degenerate: bool,
}

fn min_max(values: &mut [f64]) -> bool {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > 0.0 {
        values.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
        false
    } else {
        values.iter_mut().for_each(|v| *v = 0.0);
        true
    }
}

/// 1 − mean min-max-normalized MSE between every pair of methods.
///
/// `preds[m][r]` holds method `m`'s predictions in repeat `r`.
pub fn between_prediction_regression(preds: &[Vec<PredictionSet>], scope: MseNormalization) -> Result<BetweenRegression> {
    let m = preds.len();
    let r = preds.first().map_or(0, Vec::len);
    if m < 2 || r == 0 || preds.iter().any(|p| p.len() != r) {
        return invalid("need at least two methods with equally many repeats");
    }
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    // raw[pair][repeat]
    let mut raw = vec![vec![0.0; r]; pairs.len()];
    for (pi, &(i, j)) in pairs.iter().enumerate() {
        for rep in 0..r {
            let (x, y) = (&preds[i][rep], &preds[j][rep]);
            check_aligned(x, y)?;
            let (PredictionValues::Reals(p), PredictionValues::Reals(q)) = (x.predicted(), y.predicted()) else {
                return invalid("MSE agreement needs real-valued predictions");
            };
            raw[pi][rep] = mse(p, q);
        }
    }
    let mut degenerate = false;
    match scope {
        MseNormalization::PerRepeat => {
            for rep in 0..r {
                let mut col: Vec<f64> = raw.iter().map(|row| row[rep]).collect();
                degenerate |= min_max(&mut col);
                for (row, v) in raw.iter_mut().zip(col) {
                    row[rep] = v;
                }
            }
        }
        MseNormalization::PerPair => {
            for row in raw.iter_mut() {
                degenerate |= min_max(row);
            }
        }
    }
    let mut scores = vec![vec![1.0; m]; m];
    for (pi, &(i, j)) in pairs.iter().enumerate() {
        let s = 1.0 - raw[pi].iter().sum::<f64>() / r as f64;
        scores[i][j] = s;
        scores[j][i] = s;
    }
    if degenerate {
        log::warn!("min-max normalization of prediction MSE was degenerate");
    }
    Ok(BetweenRegression { scores, degenerate })
}

pub fn accuracy_classification(preds: &PredictionSet) -> Result<f64> {
    let (PredictionValues::Classes(p), PredictionValues::Classes(t)) = (preds.predicted(), preds.truth()) else {
        return invalid("classification accuracy needs class predictions");
    };
    if p.is_empty() {
        return invalid("no predictions");
    }
    Ok(p.iter().zip(t).filter(|(a, b)| a == b).count() as f64 / p.len() as f64)
}

/// exp(−MSE) against the truth.
pub fn accuracy_regression(preds: &PredictionSet) -> Result<f64> {
    let (PredictionValues::Reals(p), PredictionValues::Reals(t)) = (preds.predicted(), preds.truth()) else {
        return invalid("regression accuracy needs real predictions");
    };
    if p.is_empty() {
        return invalid("no predictions");
    }
    Ok((-mse(p, t)).exp())
}

pub fn accuracy(preds: &PredictionSet) -> Result<f64> {
    match preds.predicted() {
        PredictionValues::Classes(_) => accuracy_classification(preds),
        PredictionValues::Reals(_) => accuracy_regression(preds),
    }
}

/// A partition metric between a labeling and ground-truth classes.
pub fn accuracy_clustering(labels: &ClusterLabeling, truth: &ClusterLabeling, metric: PartitionMetric) -> Result<f64> {
    let truth = if labels.sample_ids() == truth.sample_ids() { truth.clone() } else { truth.restrict_to(labels.sample_ids())? };
    metric.score(labels, &truth)
}

/// Rows are datasets, columns methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityTable {
    pub metric: String,
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
    pub cells: Vec<Vec<Option<CellScore>>>,
}

impl StabilityTable {
    pub fn new(metric: impl Into<String>, datasets: Vec<String>, methods: Vec<String>) -> Self {
        let cells = vec![vec![None; methods.len()]; datasets.len()];
        Self { metric: metric.into(), datasets, methods, cells }
    }

    pub fn value(&self, dataset: usize, method: usize) -> Option<f64> {
        self.cells[dataset][method].as_ref().and_then(|c| c.mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{Embedding, FeatureRanking};
    use crate::dataset::sequential_ids;
    use nalgebra::DMatrix;

    fn ids(v: &[&str]) -> Vec<SampleId> {
        v.iter().map(|s| SampleId::from(*s)).collect()
    }

    fn ranking(order: &[usize]) -> Interpretation {
        Interpretation::Ranking(FeatureRanking::from_order(order.to_vec()).unwrap())
    }

    fn ao(k: usize) -> PairScorer {
        PairScorer::Rank { metric: RankMetric::AverageOverlap, params: TopKParams { k, kendall_p: 0.0 } }
    }

    #[test]
    fn identical_rankings_are_stable() {
        let arts = vec![ranking(&[2, 0, 1, 3]); 4];
        for metric in [RankMetric::Jaccard, RankMetric::AverageOverlap, RankMetric::Kendall] {
            let s = PairScorer::Rank { metric, params: TopKParams { k: 2, kendall_p: 0.0 } };
            let cell = within_method(&arts, &s).unwrap();
            assert_eq!(cell.mean, Some(1.0));
            assert_eq!(cell.n_pairs, 6);
        }
    }

    #[test]
    fn mean_of_pairs_and_order_invariance() {
        // Jaccard@1 pairs: (a,b)=1, (a,c)=0, (b,c)=0.
        let arts = vec![ranking(&[0, 1, 2]), ranking(&[0, 2, 1]), ranking(&[1, 0, 2])];
        let s = PairScorer::Rank { metric: RankMetric::Jaccard, params: TopKParams { k: 1, kendall_p: 0.0 } };
        let fwd = within_method(&arts, &s).unwrap().mean.unwrap();
        assert!((fwd - 1.0 / 3.0).abs() < 1e-15);
        let rev: Vec<_> = arts.iter().rev().cloned().collect();
        assert!((within_method(&rev, &s).unwrap().mean.unwrap() - fwd).abs() < 1e-15);
        let two = within_method(&arts[..2], &ao(2)).unwrap().mean.unwrap();
        let direct = pair_score(&ao(2), &arts[0], &arts[1]).unwrap().unwrap();
        assert_eq!(two, direct);
    }

    #[test]
    fn subsampled_labelings_use_intersection() {
        let a = ClusterLabeling::new(ids(&["a", "b", "c", "d", "e"]), vec![0, 0, 1, 1, 1], 2).unwrap();
        let b = ClusterLabeling::new(ids(&["a", "c", "d", "e", "f"]), vec![1, 0, 0, 0, 1], 2).unwrap();
        let s = PairScorer::Partition { metric: PartitionMetric::Ari };
        let got = pair_score(&s, &Interpretation::Labels(a), &Interpretation::Labels(b)).unwrap();
        // On {a,c,d,e}: [0,1,1,1] vs [1,0,0,0] is the same partition.
        assert_eq!(got, Some(1.0));
    }

    #[test]
    fn disjoint_pairs_skipped() {
        let a = ClusterLabeling::new(ids(&["a", "b"]), vec![0, 1], 2).unwrap();
        let b = ClusterLabeling::new(ids(&["c", "d"]), vec![0, 1], 2).unwrap();
        let arts = vec![Interpretation::Labels(a), Interpretation::Labels(b)];
        let cell = within_method(&arts, &PairScorer::Partition { metric: PartitionMetric::Ari }).unwrap();
        assert_eq!((cell.mean, cell.n_pairs, cell.n_skipped), (None, 0, 1));
    }

    #[test]
    fn between_requires_same_plan() {
        let arts = vec![ranking(&[0, 1, 2])];
        assert!(between_method(&arts, 1, &arts, 2, &ao(2)).is_err());
        assert_eq!(between_method(&arts, 7, &arts, 7, &ao(2)).unwrap().mean, Some(1.0));
    }

    #[test]
    fn embeddings_self_stable() {
        let e = Embedding::new(sequential_ids(6), DMatrix::from_fn(6, 2, |i, j| (i * 3 + j * j) as f64)).unwrap();
        let arts = vec![Interpretation::Embedding(e.clone()), Interpretation::Embedding(e)];
        let s = PairScorer::Neighbors { grid_size: 50, sample_cap: 500, seed: 0 };
        assert!((within_method(&arts, &s).unwrap().mean.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kind_mismatch_errors() {
        assert!(pair_score(&ao(1), &ranking(&[0]), &Interpretation::Labels(
            ClusterLabeling::new(ids(&["a"]), vec![0], 1).unwrap()
        ))
        .is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(label_agreement(&[2, 2, 2]), 1.0);
        assert!((label_agreement(&[0, 1, 0, 1]) - 0.5).abs() < 1e-15);
        assert!((label_agreement(&[0, 1, 2, 3]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sd_examples() {
        assert_eq!(value_agreement(&[1.5, 1.5, 1.5]), 1.0);
        assert!((value_agreement(&[0.0, 2.0]) - (-(2f64.sqrt())).exp()).abs() < 1e-15);
        assert!((value_agreement(&[3.0, 5.0]) - value_agreement(&[0.0, 2.0])).abs() < 1e-15);
    }

    fn reals(id_list: &[&str], p: &[f64]) -> PredictionSet {
        PredictionSet::new(ids(id_list), PredictionValues::Reals(p.to_vec()), PredictionValues::Reals(vec![0.0; p.len()])).unwrap()
    }

    fn classes(id_list: &[&str], p: &[usize]) -> PredictionSet {
        PredictionSet::classes(ids(id_list), p.to_vec(), vec![0; p.len()], 4).unwrap()
    }

    #[test]
    fn grouping_excludes_single_appearances() {
        let sets = vec![classes(&["a", "b"], &[0, 1]), classes(&["a", "c"], &[1, 2]), classes(&["a", "b"], &[0, 1])];
        let st = prediction_stability(&sets).unwrap();
        assert_eq!(st.excluded, 1);
        assert_eq!(st.per_sample.len(), 2);
        let a = st.per_sample.iter().find(|(id, _)| id.as_str() == "a").unwrap().1;
        assert!((a - label_agreement(&[0, 1, 0])).abs() < 1e-15);
    }

    #[test]
    fn between_classification_agreement() {
        let a = vec![classes(&["a", "b"], &[0, 1])];
        let same = between_prediction_classification(&a, &a).unwrap();
        let flipped = between_prediction_classification(&a, &[classes(&["a", "b"], &[1, 0])]).unwrap();
        let half = between_prediction_classification(&a, &[classes(&["a", "b"], &[0, 0])]).unwrap();
        assert_eq!((same, flipped, half), (1.0, 0.0, 0.5));
    }

    #[test]
    fn min_max_mse_example() {
        let mut v = [0.0, 5.0, 10.0];
        assert!(!min_max(&mut v));
        assert_eq!(v.map(|x| 1.0 - x), [1.0, 0.5, 0.0]);

        // Pair MSEs (0,1) = 0, (0,2) = 10, (1,2) = 10.
        let base = [0.0, 0.0];
        let m0 = vec![reals(&["a", "b"], &base)];
        let m1 = vec![reals(&["a", "b"], &base)];
        let m2 = vec![reals(&["a", "b"], &[10f64.sqrt(), 10f64.sqrt()])];
        let out = between_prediction_regression(&[m0, m1, m2], MseNormalization::PerRepeat).unwrap();
        assert_eq!(out.scores[0][1], 1.0);
        assert_eq!(out.scores[0][2], 0.0);
        assert_eq!(out.scores[1][2], 0.0);
        assert_eq!(out.scores[2][2], 1.0);

        let n = |v: f64| vec![reals(&["a"], &[v])];
        let three = between_prediction_regression(&[n(0.0), n(5f64.sqrt()), n(10f64.sqrt())], MseNormalization::PerRepeat).unwrap();
        // MSEs: (0,1)=5, (0,2)=10, (1,2)=(√10−√5)² ≈ 0.858.
        let m12 = (10f64.sqrt() - 5f64.sqrt()).powi(2);
        let norm = |v: f64| (v - m12) / (10.0 - m12);
        assert!((three.scores[0][1] - (1.0 - norm(5.0))).abs() < 1e-12);
        assert!((three.scores[0][2] - 0.0).abs() < 1e-12);
        assert!((three.scores[1][2] - 1.0).abs() < 1e-12);
        assert!(!three.degenerate);
    }

    #[test]
    fn degenerate_normalization_flagged() {
        let n = |v: f64| vec![reals(&["a"], &[v])];
        let out = between_prediction_regression(&[n(1.0), n(1.0)], MseNormalization::PerRepeat).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.scores[0][1], 1.0);
    }

    #[test]
    fn accuracy_examples() {
        let c = PredictionSet::classes(ids(&["a", "b", "c", "d"]), vec![0, 1, 1, 0], vec![0, 1, 1, 1], 2).unwrap();
        assert_eq!(accuracy(&c).unwrap(), 0.75);
        let r = PredictionSet::new(ids(&["a"]), PredictionValues::Reals(vec![1.0]), PredictionValues::Reals(vec![0.0])).unwrap();
        assert!((accuracy(&r).unwrap() - (-1f64).exp()).abs() < 1e-15);
        let far = PredictionSet::new(ids(&["a"]), PredictionValues::Reals(vec![10.0]), PredictionValues::Reals(vec![0.0])).unwrap();
        assert!(accuracy(&far).unwrap() < 1e-40);
        let lab = ClusterLabeling::new(sequential_ids(4), vec![0, 0, 1, 1], 2).unwrap();
        let truth = ClusterLabeling::new(sequential_ids(4), vec![0, 1, 0, 1], 2).unwrap();
        assert!((accuracy_clustering(&lab, &truth, PartitionMetric::Ari).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn failure_threshold() {
        assert!(!too_many_failures(10, 5));
        assert!(too_many_failures(10, 4));
        assert!(!too_many_failures(3, 2));
    }
}
