//! Linear and distance-based embeddings: PCA, Gaussian random projection,
//! classical MDS and Isomap.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

use super::linalg::{center_columns, connected_components, fix_column_signs, pairwise_sq_euclidean, sym_eigen_ascending};
use super::Fitted;
use crate::error::{invalid, Error, Result};
use crate::rng::{seeded, standard_normal};

pub const DEFAULT_ISOMAP_NEIGHBORS: usize = 5;

/// Scores on the top-`r` principal directions. Each direction is signed so
/// its largest-magnitude loading is positive.
pub fn pca(x: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if r == 0 || r > n.min(p) {
        return invalid(format!("PCA rank must lie in 1..={}, got {r}", n.min(p)));
    }
    let (xc, _) = center_columns(x);
    let svd = xc.clone().svd(false, true);
    let vt = svd.v_t.expect("Vt requested");
    let s = &svd.singular_values;
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut loadings = DMatrix::from_fn(p, r, |j, c| vt[(idx[c], j)]);
    fix_column_signs(&mut loadings);
    Ok(xc * loadings)
}

/// `X·G/√r` with `G` drawn i.i.d. standard normal from `seed`.
pub fn random_projection(x: &DMatrix<f64>, r: usize, seed: u64) -> Result<DMatrix<f64>> {
    if r == 0 {
        return invalid("projection rank must be >= 1");
    }
    let mut rng = seeded(seed);
    // Filled row-major so the draw order does not depend on storage layout.
    let mut g = DMatrix::zeros(x.ncols(), r);
    for j in 0..x.ncols() {
        for c in 0..r {
            g[(j, c)] = standard_normal(&mut rng);
        }
    }
    random_projection_with(x, &g)
}

/// `X·G/√r` for a caller-supplied `P × r` matrix.
pub fn random_projection_with(x: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if g.nrows() != x.ncols() || g.ncols() == 0 {
        return invalid(format!("projection matrix must be {} x r", x.ncols()));
    }
    Ok(x * g / (g.ncols() as f64).sqrt())
}

/// Classical scaling of a squared-distance matrix. Directions without a
/// positive eigenvalue become zero columns and are reported in the notes.
pub fn classical_mds(d2: &DMatrix<f64>, r: usize) -> Result<Fitted<DMatrix<f64>>> {
    let n = d2.nrows();
    if r == 0 || r > n {
        return invalid(format!("MDS rank must lie in 1..={n}, got {r}"));
    }
    let row_means: Vec<f64> = d2.row_iter().map(|row| row.sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (d2[(i, j)] - row_means[i] - row_means[j] + grand));
    let (vals, vecs) = sym_eigen_ascending(b);
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = top * 1e-12 * n as f64;
    let mut v = DMatrix::from_fn(n, r, |i, c| vecs[(i, n - 1 - c)]);
    fix_column_signs(&mut v);
    let mut notes = Vec::new();
    for c in 0..r {
        let lambda = vals[n - 1 - c];
        if lambda > tol && lambda > 0.0 {
            v.column_mut(c).scale_mut(lambda.sqrt());
        } else {
            v.column_mut(c).fill(0.0);
            notes.push(format!("component {c} has no positive eigenvalue ({lambda:.3e}); padded with zeros"));
        }
    }
    Ok(Fitted { value: v, notes })
}

/// Classical MDS on euclidean distances between rows.
pub fn metric_mds(x: &DMatrix<f64>, r: usize) -> Result<Fitted<DMatrix<f64>>> {
    classical_mds(&pairwise_sq_euclidean(x), r)
}

/// Geodesic distances over the symmetrized kNN graph (edge when either end selects the other).
pub fn geodesic_distances(x: &DMatrix<f64>, n_neighbors: usize) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n_neighbors == 0 || n_neighbors >= n {
        return invalid(format!("n_neighbors must lie in 1..{n}, got {n_neighbors}"));
    }
    let d2 = pairwise_sq_euclidean(x);
    let mut edge = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut cand: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        cand.sort_by(|&a, &b| d2[(i, a)].total_cmp(&d2[(i, b)]).then(a.cmp(&b)));
        for &j in &cand[..n_neighbors] {
            edge[(i, j)] = 1.0;
            edge[(j, i)] = 1.0;
        }
    }
    let adj: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| (0..n).filter(|&j| edge[(i, j)] > 0.0).map(|j| (j, d2[(i, j)].sqrt())).collect())
        .collect();
    let mut geo = DMatrix::from_element(n, n, f64::INFINITY);
    for s in 0..n {
        let dist = dijkstra(&adj, s);
        for (t, d) in dist.into_iter().enumerate() {
            geo[(s, t)] = d;
        }
    }
    if geo.iter().any(|d| d.is_infinite()) {
        let (components, _) = connected_components(&edge);
        return Err(Error::DisconnectedGraph { components, hint: "increase n_neighbors" });
    }
    // Symmetrize away any rounding asymmetry between the two search directions.
    Ok(DMatrix::from_fn(n, n, |i, j| geo[(i, j)].min(geo[(j, i)])))
}

#[derive(PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((Dist(0.0), source)));
    while let Some(Reverse((Dist(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((Dist(nd), v)));
            }
        }
    }
    dist
}

/// Classical MDS on kNN-graph geodesic distances.
pub fn isomap(x: &DMatrix<f64>, r: usize, n_neighbors: usize) -> Result<Fitted<DMatrix<f64>>> {
    let geo = geodesic_distances(x, n_neighbors)?;
    classical_mds(&geo.map(|d| d * d), r)
}
