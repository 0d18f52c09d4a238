//! Model-agnostic permutation importance.

use nalgebra::DMatrix;

use super::Predictor;
use crate::artifact::FeatureRanking;
use crate::dataset::{TabularDataset, Target};
use crate::error::{invalid, Result};
use crate::rng::{derive_seed, seeded, shuffle};

pub const DEFAULT_REPEATS: usize = 10;

fn error(pred: &[f64], target: &Target) -> f64 {
    let n = pred.len() as f64;
    match target {
        Target::Real(y) => pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n,
        Target::Class { labels, .. } => {
            pred.iter().zip(labels).filter(|(p, &t)| **p != t as f64).count() as f64 / n
        }
    }
}

/// Error increase for every feature and repeat: `out[j][r]`.
pub fn permutation_deltas(
    model: &dyn Predictor,
    test: &TabularDataset,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let Some(target) = test.target() else {
        return invalid("permutation importance needs a target");
    };
    if test.n_samples() == 0 || repeats == 0 {
        return invalid("permutation importance needs samples and at least one repeat");
    }
    let x = test.features();
    let base = error(&model.predict(x), target);
    let mut work: DMatrix<f64> = x.clone();
    let mut out = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let mut rng = seeded(derive_seed(seed, j as u64));
        let original: Vec<f64> = x.column(j).iter().copied().collect();
        let mut col = original.clone();
        let mut deltas = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            shuffle(&mut col, &mut rng);
            work.column_mut(j).copy_from_slice(&col);
            deltas.push(error(&model.predict(&work), target) - base);
        }
        work.column_mut(j).copy_from_slice(&original);
        out.push(deltas);
    }
    Ok(out)
}

/// Mean error increase over `repeats` shuffles of each column, ranked.
pub fn permutation_importance(
    model: &dyn Predictor,
    test: &TabularDataset,
    repeats: usize,
    seed: u64,
) -> Result<FeatureRanking> {
    let deltas = permutation_deltas(model, test, repeats, seed)?;
    FeatureRanking::from_scores(deltas.iter().map(|d| d.iter().sum::<f64>() / d.len() as f64).collect())
}
