//! Lloyd's k-means with random or k-means++ seeding, and Sculley's
//! mini-batch variant.
//!
//! An empty cluster is re-seeded at the point farthest from its current
//! centroid, so a fit never fails once `1 ≤ K ≤ N`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::row_sq_dist;
use crate::error::{invalid, Result};
use crate::rng::{derive_seed, sample_without_replacement, seeded, StdRng};

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_N_INIT: usize = 10;
pub const DEFAULT_BATCH_SIZE: usize = 100;
pub const DEFAULT_MINIBATCH_STEPS: usize = 100;
pub const DEFAULT_MINIBATCH_N_INIT: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMeansInit {
    Random,
    #[serde(rename = "kmeanspp")]
    KMeansPlusPlus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub init: KMeansInit,
    pub max_iter: usize,
    pub n_init: usize,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(k: usize, init: KMeansInit, seed: u64) -> Self {
        Self { k, init, max_iter: DEFAULT_MAX_ITER, n_init: DEFAULT_N_INIT, seed }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centers: DMatrix<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_to_center(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, k: usize) -> f64 {
    (0..x.ncols()).map(|j| (x[(i, j)] - c[(k, j)]).powi(2)).sum()
}

/// Nearest centre per row (lowest index on ties).
pub fn assign(x: &DMatrix<f64>, centers: &DMatrix<f64>) -> Vec<usize> {
    (0..x.nrows())
        .map(|i| {
            let mut best = (f64::INFINITY, 0);
            for k in 0..centers.nrows() {
                let d = sq_to_center(x, i, centers, k);
                if d < best.0 {
                    best = (d, k);
                }
            }
            best.1
        })
        .collect()
}

pub fn inertia(x: &DMatrix<f64>, centers: &DMatrix<f64>, labels: &[usize]) -> f64 {
    labels.iter().enumerate().map(|(i, &l)| sq_to_center(x, i, centers, l)).sum()
}

/// Per-cluster coordinate sums and counts over `rows`.
fn batch_sums(x: &DMatrix<f64>, rows: &[usize], labels: &[usize], k: usize) -> (DMatrix<f64>, Vec<usize>) {
    let mut sums = DMatrix::zeros(k, x.ncols());
    let mut counts = vec![0usize; k];
    for (&i, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for j in 0..x.ncols() {
            sums[(l, j)] += x[(i, j)];
        }
    }
    (sums, counts)
}

/// Moves every empty centre onto the point farthest from its own centre.
fn reseed_empty(x: &DMatrix<f64>, centers: &mut DMatrix<f64>, labels: &mut [usize], counts: &[usize]) {
    let mut taken = vec![false; x.nrows()];
    for (c, &count) in counts.iter().enumerate() {
        if count != 0 {
            continue;
        }
        let mut far = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..x.nrows() {
            let d = sq_to_center(x, i, centers, labels[i]);
            if !taken[i] && d > far.0 {
                far = (d, i);
            }
        }
        if far.1 == usize::MAX {
            continue;
        }
        taken[far.1] = true;
        log::debug!("re-seeding empty cluster {c} at row {}", far.1);
        centers.row_mut(c).copy_from(&x.row(far.1));
        labels[far.1] = c;
    }
}

/// One Lloyd centre update: means of the assigned points, empty clusters re-seeded.
fn lloyd_update(x: &DMatrix<f64>, labels: &[usize], k: usize) -> DMatrix<f64> {
    let all: Vec<usize> = (0..x.nrows()).collect();
    let (sums, counts) = batch_sums(x, &all, labels, k);
    let mut centers = sums;
    for (c, &count) in counts.iter().enumerate().take(k) {
        if count > 0 {
            let n = count as f64;
            centers.row_mut(c).iter_mut().for_each(|v| *v /= n);
        }
    }
    let mut scratch = labels.to_vec();
    reseed_empty(x, &mut centers, &mut scratch, &counts);
    centers
}

/// Lloyd iterations from the given centres until the assignment stops changing.
pub fn lloyd(x: &DMatrix<f64>, init: DMatrix<f64>, max_iter: usize) -> KMeansFit {
    let k = init.nrows();
    let mut centers = init;
    let mut labels = assign(x, &centers);
    let mut trace = vec![inertia(x, &centers, &labels)];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        centers = lloyd_update(x, &labels, k);
        let next = assign(x, &centers);
        trace.push(inertia(x, &centers, &next));
        if next == labels {
            break;
        }
        labels = next;
    }
    let inertia = *trace.last().expect("non-empty trace");
    KMeansFit { labels, centers, inertia, inertia_trace: trace, iterations }
}

fn rows_matrix(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |r, j| x[(rows[r], j)])
}

/// D²-weighted seeding.
pub fn kmeanspp_centers(x: &DMatrix<f64>, k: usize, rng: &mut StdRng) -> DMatrix<f64> {
    let n = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    let mut used = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    used[first] = true;
    let mut d2: Vec<f64> = (0..n).map(|i| row_sq_dist(x, i, first)).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave the target just past the running sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !used[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        used[next] = true;
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(row_sq_dist(x, i, next));
        }
    }
    rows_matrix(x, &chosen)
}

pub fn initial_centers(x: &DMatrix<f64>, k: usize, init: KMeansInit, rng: &mut StdRng) -> DMatrix<f64> {
    match init {
        KMeansInit::Random => rows_matrix(x, &sample_without_replacement(x.nrows(), k, rng)),
        KMeansInit::KMeansPlusPlus => kmeanspp_centers(x, k, rng),
    }
}

fn check(x: &DMatrix<f64>, k: usize) -> Result<()> {
    if k == 0 || k > x.nrows() {
        return invalid(format!("cluster count must lie in 1..={}, got {k}", x.nrows()));
    }
    Ok(())
}

/// Best of `n_init` seeded runs by final inertia (earliest wins ties).
pub fn kmeans(x: &DMatrix<f64>, params: &KMeansParams) -> Result<KMeansFit> {
    check(x, params.k)?;
    let mut best: Option<KMeansFit> = None;
    for run in 0..params.n_init.max(1) {
        let mut rng = seeded(derive_seed(params.seed, run as u64));
        let fit = lloyd(x, initial_centers(x, params.k, params.init, &mut rng), params.max_iter);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one run"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiniBatchParams {
    pub k: usize,
    pub batch_size: usize,
    pub max_iter: usize,
    pub n_init: usize,
    pub seed: u64,
}

impl MiniBatchParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, batch_size: DEFAULT_BATCH_SIZE, max_iter: DEFAULT_MINIBATCH_STEPS, n_init: DEFAULT_MINIBATCH_N_INIT, seed }
    }
}

/// Mini-batch steps from the given centres.
///
/// Each centre moves towards its batch mean with learning rate
/// `m / (v + m)`, where `v` counts the points it absorbed in earlier steps.
/// When the batch is the whole dataset the counts restart every step, which
/// makes each step exactly one Lloyd update.
pub fn minibatch_from(x: &DMatrix<f64>, init: DMatrix<f64>, batch_size: usize, max_iter: usize, rng: &mut StdRng) -> KMeansFit {
    let n = x.nrows();
    let k = init.nrows();
    if batch_size >= n {
        return lloyd(x, init, max_iter);
    }
    let mut centers = init;
    let mut seen = vec![0usize; k];
    let mut trace = Vec::with_capacity(max_iter);
    for _ in 0..max_iter {
        let rows = sample_without_replacement(n, batch_size, rng);
        let batch = rows_matrix(x, &rows);
        let labels = assign(&batch, &centers);
        let (sums, counts) = batch_sums(x, &rows, &labels, k);
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let total = (seen[c] + counts[c]) as f64;
            let keep = seen[c] as f64 / total;
            for j in 0..x.ncols() {
                centers[(c, j)] = centers[(c, j)] * keep + sums[(c, j)] / total;
            }
            seen[c] += counts[c];
        }
        trace.push(inertia(&batch, &centers, &assign(&batch, &centers)));
    }
    let mut labels = assign(x, &centers);
    let (_, counts) = batch_sums(x, &(0..n).collect::<Vec<_>>(), &labels, k);
    if counts.contains(&0) {
        reseed_empty(x, &mut centers, &mut labels, &counts);
        labels = assign(x, &centers);
    }
    let inertia = inertia(x, &centers, &labels);
    KMeansFit { labels, centers, inertia, inertia_trace: trace, iterations: max_iter }
}

/// Mini-batch k-means with k-means++ seeding, best of `n_init` runs on full-data inertia.
pub fn minibatch_kmeans(x: &DMatrix<f64>, params: &MiniBatchParams) -> Result<KMeansFit> {
    check(x, params.k)?;
    if params.batch_size == 0 {
        return invalid("batch size must be >= 1");
    }
    let mut best: Option<KMeansFit> = None;
    for run in 0..params.n_init.max(1) {
        let mut rng = seeded(derive_seed(params.seed, run as u64));
        let init = kmeanspp_centers(x, params.k, &mut rng);
        let fit = minibatch_from(x, init, params.batch_size, params.max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one run"))
}
