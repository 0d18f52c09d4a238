//! Local-neighbourhood stability of embeddings (NN-Jaccard-AUC).
//!
//! For every evaluated sample the k nearest other samples are found in both
//! embeddings and compared with the Jaccard index; the per-sample mean is
//! swept over k and summarized by the trapezoidal area under the curve with
//! k rescaled to [0, 1]. A sample is never its own neighbour, and equal
//! distances are ordered by row position, which is the sample-id order of
//! the embedding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::artifact::Embedding;
use crate::error::{invalid, Error, Result};
use crate::rng::{self, derive_seed, seeded};

pub const DEFAULT_GRID_SIZE: usize = 50;
pub const DEFAULT_SAMPLE_CAP: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnCurve {
    pub k_grid: Vec<usize>,
    pub scores: Vec<f64>,
    pub auc: f64,
}

fn sq_dist(coords: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    (0..coords.ncols()).map(|j| (coords[(a, j)] - coords[(b, j)]).powi(2)).sum()
}

/// All other rows of `coords` ordered by distance to row `i`, ties by index.
fn neighbor_order(coords: &DMatrix<f64>, i: usize) -> Vec<usize> {
    let n = coords.nrows();
    let mut cand: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (sq_dist(coords, i, j), j)).collect();
    cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.into_iter().map(|(_, j)| j).collect()
}

/// The `k` nearest neighbours (row positions) of every sample.
pub fn knn_sets(e: &Embedding, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = e.len();
    if k == 0 || k >= n {
        return invalid(format!("neighbourhood size must lie in 1..{n}, got {k}"));
    }
    Ok((0..n)
        .map(|i| {
            let mut nb = neighbor_order(e.coords(), i);
            nb.truncate(k);
            nb
        })
        .collect())
}

fn check_pair(a: &Embedding, b: &Embedding) -> Result<usize> {
    if a.sample_ids() != b.sample_ids() {
        return Err(Error::SampleIdMismatch);
    }
    if a.len() < 2 {
        return invalid("neighbour stability needs at least 2 samples");
    }
    Ok(a.len())
}

/// Rows evaluated when the embedding exceeds `cap` samples. Depends only on
/// the seed and the sample ids, so both argument orders pick the same rows.
fn evaluation_rows(e: &Embedding, cap: usize, seed: u64) -> Vec<usize> {
    let n = e.len();
    if cap == 0 || n <= cap {
        return (0..n).collect();
    }
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for id in e.sample_ids() {
        for b in id.as_str().bytes().chain(std::iter::once(0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    let mut rows = rng::sample_without_replacement(n, cap, &mut seeded(derive_seed(seed, h)));
    rows.sort_unstable();
    rows
}

/// Mean Jaccard of the neighbour prefixes for k = 1..N−1 (index k−1).
fn mean_jaccard_profile(a: &Embedding, b: &Embedding, rows: &[usize]) -> Vec<f64> {
    let n = a.len();
    let mut acc = vec![0.0; n - 1];
    let mut in_a = vec![false; n];
    let mut in_b = vec![false; n];
    for &i in rows {
        let oa = neighbor_order(a.coords(), i);
        let ob = neighbor_order(b.coords(), i);
        in_a.iter_mut().for_each(|f| *f = false);
        in_b.iter_mut().for_each(|f| *f = false);
        let mut inter = 0usize;
        for k in 0..n - 1 {
            let (x, y) = (oa[k], ob[k]);
            in_a[x] = true;
            in_b[y] = true;
            if x == y {
                inter += 1;
            } else {
                inter += usize::from(in_b[x]) + usize::from(in_a[y]);
            }
            let size = k + 1;
            acc[k] += inter as f64 / (2 * size - inter) as f64;
        }
    }
    let m = rows.len() as f64;
    acc.iter_mut().for_each(|v| *v /= m);
    acc
}

/// Mean per-sample Jaccard of the k-nearest-neighbour sets.
pub fn nn_jaccard_at_k(a: &Embedding, b: &Embedding, k: usize, sample_cap: usize, seed: u64) -> Result<f64> {
    let n = check_pair(a, b)?;
    if k == n {
        return Ok(1.0);
    }
    if k == 0 || k > n {
        return invalid(format!("neighbourhood size must lie in 1..={n}, got {k}"));
    }
    let rows = evaluation_rows(a, sample_cap, seed);
    Ok(mean_jaccard_profile(a, b, &rows)[k - 1])
}

/// Up to `grid_size` evenly spaced integers in 1..=n−1, then n.
pub fn k_grid(n: usize, grid_size: usize) -> Vec<usize> {
    let top = n - 1;
    let mut grid: Vec<usize> = if grid_size >= top {
        (1..=top).collect()
    } else if grid_size < 2 {
        vec![1]
    } else {
        let span = (top - 1) as f64;
        (0..grid_size).map(|i| 1 + (span * i as f64 / (grid_size - 1) as f64).round() as usize).collect()
    };
    grid.dedup();
    grid.push(n);
    grid
}

/// Trapezoidal area of `scores` over `k_grid` mapped to [0, 1] by (k−1)/(n−1).
pub fn trapezoid_auc(k_grid: &[usize], scores: &[f64], n: usize) -> f64 {
    let x = |k: usize| (k - 1) as f64 / (n - 1) as f64;
    k_grid
        .windows(2)
        .zip(scores.windows(2))
        .map(|(k, s)| (x(k[1]) - x(k[0])) * (s[0] + s[1]) / 2.0)
        .sum()
}

/// NN-Jaccard curve on the k grid with the analytic endpoint (k = N, score 1)
/// and its AUC.
pub fn nn_jaccard_auc(a: &Embedding, b: &Embedding, grid_size: usize, sample_cap: usize, seed: u64) -> Result<NnCurve> {
    let n = check_pair(a, b)?;
    let rows = evaluation_rows(a, sample_cap, seed);
    let profile = mean_jaccard_profile(a, b, &rows);
    let k_grid = k_grid(n, grid_size);
    let scores: Vec<f64> = k_grid.iter().map(|&k| if k == n { 1.0 } else { profile[k - 1] }).collect();
    let auc = trapezoid_auc(&k_grid, &scores, n).clamp(0.0, 1.0);
    Ok(NnCurve { k_grid, scores, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sequential_ids;
    use rand::Rng;

    fn emb(coords: DMatrix<f64>) -> Embedding {
        Embedding::new(sequential_ids(coords.nrows()), coords).unwrap()
    }

    fn random_emb(n: usize, r: usize, seed: u64) -> Embedding {
        let mut rng = seeded(seed);
        emb(DMatrix::from_fn(n, r, |_, _| rng.random::<f64>()))
    }

    #[test]
    fn collinear_ties_break_by_id() {
        let e = emb(DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]));
        assert_eq!(knn_sets(&e, 1).unwrap(), vec![vec![1], vec![0], vec![1]]);
        let all = knn_sets(&e, 2).unwrap();
        assert_eq!(all, vec![vec![1, 2], vec![0, 2], vec![1, 0]]);
        assert!(knn_sets(&e, 3).is_err());
    }

    #[test]
    fn duplicates_are_mutual_neighbours() {
        let e = emb(DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 5.0, 5.0, 1.0, 1.0]));
        let nb = knn_sets(&e, 1).unwrap();
        assert_eq!((nb[0][0], nb[2][0]), (2, 0));
    }

    #[test]
    fn identity_and_reflection() {
        let e = random_emb(60, 3, 1);
        let neg = emb(-e.coords().clone());
        for k in [1, 5, 59, 60] {
            assert_eq!(nn_jaccard_at_k(&e, &e, k, 500, 0).unwrap(), 1.0);
            assert_eq!(nn_jaccard_at_k(&e, &neg, k, 500, 0).unwrap(), 1.0);
        }
        let curve = nn_jaccard_auc(&e, &e, 50, 500, 0).unwrap();
        assert!((curve.auc - 1.0).abs() < 1e-12);
        assert_eq!(*curve.k_grid.last().unwrap(), 60);
    }

    #[test]
    fn grid_shape() {
        let g = k_grid(100, 50);
        assert_eq!(g.len(), 51);
        assert_eq!((g[0], g[49], g[50]), (1, 99, 100));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(k_grid(5, 50), vec![1, 2, 3, 4, 5]);
        assert_eq!(k_grid(2, 50), vec![1, 2]);
    }

    #[test]
    fn symmetric_under_argument_swap_with_cap() {
        let a = random_emb(80, 2, 3);
        let b = random_emb(80, 2, 4);
        let ab = nn_jaccard_auc(&a, &b, 20, 30, 9).unwrap();
        let ba = nn_jaccard_auc(&b, &a, 20, 30, 9).unwrap();
        assert_eq!(ab, ba);
        assert!(ab.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn mismatched_ids() {
        let a = random_emb(5, 2, 1);
        let b = Embedding::new((10..15).map(crate::dataset::SampleId::from).collect(), a.coords().clone()).unwrap();
        assert!(matches!(nn_jaccard_auc(&a, &b, 5, 500, 0), Err(Error::SampleIdMismatch)));
    }
}
