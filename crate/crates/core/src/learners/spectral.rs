//! Graph-based clustering and embedding from the normalized Laplacian
//! `L = I − D^{-1/2} W D^{-1/2}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, KMeansInit, KMeansParams};
use super::linalg::{connected_components, fix_column_signs, pairwise_sq_euclidean, sym_eigen_ascending};
use super::Fitted;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_NEIGHBORS: usize = 10;
const DEGENERATE_GAP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Affinity {
    /// Symmetrized 0/1 kNN graph, `W = (A + Aᵀ)/2`.
    Knn { n_neighbors: usize },
    /// `exp(−γ‖xᵢ − xⱼ‖²)` off the diagonal; `γ` defaults to 1/P.
    Rbf { gamma: Option<f64> },
}

impl Default for Affinity {
    fn default() -> Self {
        Affinity::Knn { n_neighbors: DEFAULT_NEIGHBORS }
    }
}

impl Affinity {
    pub fn name(self) -> &'static str {
        match self {
            Affinity::Knn { .. } => "knn",
            Affinity::Rbf { .. } => "rbf",
        }
    }

    pub fn matrix(self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = x.nrows();
        let d2 = pairwise_sq_euclidean(x);
        match self {
            Affinity::Knn { n_neighbors } => {
                if n_neighbors == 0 {
                    return invalid("affinity needs at least one neighbour");
                }
                let k = n_neighbors.min(n.saturating_sub(1));
                let mut w = DMatrix::zeros(n, n);
                for i in 0..n {
                    let mut cand: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                    cand.sort_by(|&a, &b| d2[(i, a)].total_cmp(&d2[(i, b)]).then(a.cmp(&b)));
                    for &j in &cand[..k] {
                        w[(i, j)] += 0.5;
                        w[(j, i)] += 0.5;
                    }
                }
                Ok(w)
            }
            Affinity::Rbf { gamma } => {
                let g = gamma.unwrap_or(1.0 / x.ncols().max(1) as f64);
                if g.is_nan() || g <= 0.0 {
                    return invalid("rbf gamma must be positive");
                }
                Ok(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (-g * d2[(i, j)]).exp() }))
            }
        }
    }
}

/// `L = I − D^{-1/2} W D^{-1/2}` and `D^{-1/2}` (zero for isolated nodes).
pub fn normalized_laplacian(w: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = w.nrows();
    let inv_sqrt: Vec<f64> = w
        .row_iter()
        .map(|r| {
            let d = r.sum();
            if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }
        })
        .collect();
    let l = DMatrix::from_fn(n, n, |i, j| {
        let v = -w[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        if i == j { 1.0 + v } else { v }
    });
    (l, inv_sqrt)
}

/// Spectral clustering: bottom-K Laplacian eigenvectors, rows scaled to unit
/// length, then k-means++.
pub fn spectral_cluster(x: &DMatrix<f64>, k: usize, affinity: Affinity, seed: u64) -> Result<Vec<usize>> {
    let n = x.nrows();
    if k == 0 || k > n {
        return invalid(format!("cluster count must lie in 1..={n}, got {k}"));
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let w = affinity.matrix(x)?;
    let (components, _) = connected_components(&w);
    if components > k {
        return Err(Error::DisconnectedGraph {
            components,
            hint: "increase n_neighbors or use rbf affinity",
        });
    }
    let (l, _) = normalized_laplacian(&w);
    let (_, vecs) = sym_eigen_ascending(l);
    let mut u = vecs.columns(0, k).into_owned();
    for mut row in u.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(kmeans(&u, &KMeansParams::new(k, KMeansInit::KMeansPlusPlus, seed))?.labels)
}

/// Laplacian eigenmap: the `r` smallest non-trivial eigenvectors scaled by `D^{-1/2}`.
pub fn spectral_embedding(x: &DMatrix<f64>, r: usize, affinity: Affinity) -> Result<Fitted<DMatrix<f64>>> {
    let n = x.nrows();
    if r == 0 || r + 1 > n {
        return invalid(format!("embedding rank must lie in 1..={}, got {r}", n.saturating_sub(1)));
    }
    let w = affinity.matrix(x)?;
    let (components, _) = connected_components(&w);
    if components > 1 {
        return Err(Error::DisconnectedGraph {
            components,
            hint: "increase n_neighbors or use rbf affinity",
        });
    }
    let (l, inv_sqrt) = normalized_laplacian(&w);
    let (vals, vecs) = sym_eigen_ascending(l);
    let mut notes = Vec::new();
    if r + 1 < n && (vals[r + 1] - vals[r]).abs() < DEGENERATE_GAP {
        notes.push(format!(
            "degenerate spectrum: eigenvalue {:.6} repeats across the cut at rank {r}",
            vals[r]
        ));
    }
    let mut e = DMatrix::from_fn(n, r, |i, c| vecs[(i, c + 1)] * inv_sqrt[i]);
    fix_column_signs(&mut e);
    Ok(Fitted { value: e, notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::kmeans::tests::{ari, blobs};

    #[test]
    fn disconnected_cliques() {
        let (x, truth) = blobs(&[vec![0.0, 0.0], vec![50.0, 50.0]], 12, 0.5, 1);
        let labels = spectral_cluster(&x, 2, Affinity::Knn { n_neighbors: 5 }, 3).unwrap();
        assert_eq!(ari(&labels, &truth).unwrap(), 1.0);
        let three = blobs(&[vec![0.0, 0.0], vec![50.0, 50.0], vec![-50.0, 50.0]], 12, 0.5, 1).0;
        assert!(matches!(
            spectral_cluster(&three, 2, Affinity::Knn { n_neighbors: 5 }, 3),
            Err(Error::DisconnectedGraph { components: 3, .. })
        ));
    }

    #[test]
    fn rbf_blobs_and_single_cluster() {
        let (x, truth) = blobs(&[vec![-3.0, 0.0], vec![3.0, 0.0], vec![0.0, 5.0]], 20, 0.3, 2);
        let labels = spectral_cluster(&x, 3, Affinity::Rbf { gamma: None }, 1).unwrap();
        assert_eq!(ari(&labels, &truth).unwrap(), 1.0);
        assert_eq!(spectral_cluster(&x, 1, Affinity::default(), 1).unwrap(), vec![0; 60]);
    }

    #[test]
    fn fiedler_vector_separates_blobs() {
        let (x, truth) = blobs(&[vec![-3.0, 0.0], vec![3.0, 0.0]], 15, 0.5, 3);
        let fit = spectral_embedding(&x, 1, Affinity::Rbf { gamma: Some(0.5) }).unwrap();
        let e = fit.value;
        let side = |i: usize| e[(i, 0)] > 0.0;
        assert!((0..30).all(|i| side(i) == side(0) || truth[i] != truth[0]));
        assert!((0..30).all(|i| side(i) != side(0) || truth[i] == truth[0]));
        assert_eq!(spectral_embedding(&x, 1, Affinity::Rbf { gamma: Some(0.5) }).unwrap().value, e);
    }

    #[test]
    fn complete_uniform_graph_is_flagged() {
        // Equidistant simplex vertices give a uniform complete graph.
        let x = DMatrix::<f64>::identity(5, 5);
        let fit = spectral_embedding(&x, 2, Affinity::Rbf { gamma: Some(1.0) }).unwrap();
        assert!(fit.notes.iter().any(|n| n.contains("degenerate")));
    }

    #[test]
    fn disconnected_embedding_errors() {
        let (x, _) = blobs(&[vec![0.0, 0.0], vec![50.0, 50.0]], 12, 0.5, 1);
        assert!(matches!(
            spectral_embedding(&x, 1, Affinity::Knn { n_neighbors: 5 }),
            Err(Error::DisconnectedGraph { components: 2, .. })
        ));
    }
}
