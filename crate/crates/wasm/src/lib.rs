//! Browser bindings for three small stability experiments.
//!
//! Every entry point generates seeded synthetic data, runs the core
//! pipeline pieces in memory and returns a JSON string for the page to plot.

use nalgebra::DMatrix;
use serde::Serialize;
use stabx_core::dataset::sequential_ids;
use stabx_core::methods::{self, BuiltinMethod, MethodInputs};
use stabx_core::nnmetrics::nn_jaccard_auc;
use stabx_core::partmetrics::PartitionMetric;
use stabx_core::perturb::{make_noise, make_splits, NoiseDistribution};
use stabx_core::rankmetrics::{RankMetric, TopKParams};
use stabx_core::rng::{derive_seed, seeded, standard_normal};
use stabx_core::stability::{within_method, PairScorer};
use stabx_core::{Embedding, Interpretation, TabularDataset, TaskKind, Target};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Series {
    name: String,
    x: Vec<f64>,
    y: Vec<Option<f64>>,
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js_err)
}

/// Linear data with decreasing true coefficients on the first `n_true` features.
fn linear_data(n: usize, p: usize, n_true: usize, noise_sd: f64, seed: u64) -> stabx_core::Result<TabularDataset> {
    let mut rng = seeded(seed);
    let x = DMatrix::from_fn(n, p, |_, _| standard_normal(&mut rng));
    let y = (0..n)
        .map(|i| (0..n_true.min(p)).map(|j| x[(i, j)] * (n_true - j) as f64 / n_true as f64).sum::<f64>() + noise_sd * standard_normal(&mut rng))
        .collect();
    let names = (0..p).map(|j| format!("x{j}")).collect();
    TabularDataset::new(sequential_ids(n), x, names, Some(Target::Real(y)), TaskKind::Regression)
}

fn blobs(n: usize, k: usize, seed: u64) -> stabx_core::Result<TabularDataset> {
    let mut rng = seeded(seed);
    let x = DMatrix::from_fn(n, 2, |i, j| {
        let angle = std::f64::consts::TAU * (i % k) as f64 / k as f64;
        let centre = if j == 0 { angle.cos() } else { angle.sin() } * 4.0;
        centre + standard_normal(&mut rng)
    });
    TabularDataset::from_matrix(x)
}

/// Within-method stability of ridge rankings against the depth K, for the
/// three rank metrics.
#[wasm_bindgen]
pub fn rank_stability_vs_k(n: usize, p: usize, n_true: usize, noise_sd: f64, repeats: usize, seed: u64) -> Result<String, JsError> {
    let ds = linear_data(n, p, n_true, noise_sd, seed).map_err(js_err)?;
    let plan = make_splits(&ds, 0.7, repeats, derive_seed(seed, 1)).map_err(js_err)?;
    let mut rankings = Vec::with_capacity(repeats);
    for r in 0..plan.len() {
        let rep = plan.materialize(&ds, r).map_err(js_err)?;
        let out = methods::run(&BuiltinMethod::Ridge { folds: 5 }, &rep.train, None, MethodInputs { k_clusters: None, rank: None, seed: derive_seed(seed, r as u64) })
            .map_err(js_err)?;
        rankings.push(out.interpretation);
    }
    let mut series = Vec::new();
    for metric in RankMetric::ALL {
        let mut s = Series { name: metric.name().into(), x: vec![], y: vec![] };
        for k in 1..=p {
            let cell = within_method(&rankings, &PairScorer::Rank { metric, params: TopKParams { k, kendall_p: 0.0 } }).map_err(js_err)?;
            s.x.push(k as f64);
            s.y.push(cell.mean);
        }
        series.push(s);
    }
    json(&series)
}

/// Within-method ARI of k-means++ on blobs as additive noise grows.
#[wasm_bindgen]
pub fn cluster_ari_vs_sigma(n: usize, k: usize, sigma_max: f64, steps: usize, repeats: usize, seed: u64) -> Result<String, JsError> {
    let ds = blobs(n, k, seed).map_err(js_err)?;
    let method = BuiltinMethod::parse("kmeans").map_err(js_err)?;
    let mut s = Series { name: "kmeans++".into(), x: vec![], y: vec![] };
    for step in 0..steps.max(2) {
        let sigma = sigma_max * step as f64 / (steps.max(2) - 1) as f64;
        let plan = make_noise(&ds, NoiseDistribution::Normal, sigma, repeats, derive_seed(seed, 2)).map_err(js_err)?;
        let mut labels: Vec<Interpretation> = Vec::with_capacity(repeats);
        for r in 0..plan.len() {
            let rep = plan.materialize(&ds, r).map_err(js_err)?;
            let inputs = MethodInputs { k_clusters: Some(k), rank: None, seed: derive_seed(seed, r as u64) };
            labels.push(methods::run(&method, &rep.train, None, inputs).map_err(js_err)?.interpretation);
        }
        let cell = within_method(&labels, &PairScorer::Partition { metric: PartitionMetric::Ari }).map_err(js_err)?;
        s.x.push(sigma);
        s.y.push(cell.mean);
    }
    json(&vec![s])
}

#[derive(Serialize)]
struct Curve {
    k: Vec<usize>,
    score: Vec<f64>,
    auc: f64,
}

/// NN-Jaccard curve between a random 2-D embedding and a jittered copy.
#[wasm_bindgen]
pub fn nn_jaccard_curve(n: usize, jitter: f64, seed: u64) -> Result<String, JsError> {
    let mut rng = seeded(seed);
    let a = DMatrix::from_fn(n, 2, |_, _| standard_normal(&mut rng));
    let b = a.map(|v| v + jitter * standard_normal(&mut rng));
    let ea = Embedding::new(sequential_ids(n), a).map_err(js_err)?;
    let eb = Embedding::new(sequential_ids(n), b).map_err(js_err)?;
    let c = nn_jaccard_auc(&ea, &eb, 50, 500, seed).map_err(js_err)?;
    json(&Curve { k: c.k_grid, score: c.scores, auc: c.auc })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_curve_has_one_point_per_depth() {
        let out: serde_json::Value = serde_json::from_str(&rank_stability_vs_k(60, 6, 3, 0.5, 4, 1).unwrap()).unwrap();
        assert_eq!(out.as_array().unwrap().len(), 3);
        assert_eq!(out[0]["x"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn noise_free_clustering_is_stable() {
        let out: serde_json::Value = serde_json::from_str(&cluster_ari_vs_sigma(60, 3, 2.0, 3, 4, 2).unwrap()).unwrap();
        assert_eq!(out[0]["y"][0].as_f64(), Some(1.0));
    }

    #[test]
    fn identical_embeddings_have_unit_auc() {
        let out: serde_json::Value = serde_json::from_str(&nn_jaccard_curve(40, 0.0, 3).unwrap()).unwrap();
        assert_eq!(out["auc"].as_f64(), Some(1.0));
    }
}
