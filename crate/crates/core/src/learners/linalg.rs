//! Dense helpers shared by the learners.

use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenpairs of a symmetric matrix with eigenvalues ascending.
pub(crate) fn sym_eigen_ascending(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (values, vectors)
}

/// Flips each column so its largest-magnitude entry is positive (first one on ties).
pub(crate) fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Column-centered copy and the column means.
pub(crate) fn center_columns(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (out, means)
}

pub(crate) fn row_sq_dist(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..x.ncols() {
        let d = x[(a, j)] - x[(b, j)];
        s += d * d;
    }
    s
}

pub(crate) fn pairwise_sq_euclidean(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = row_sq_dist(x, i, j);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Number of connected components of the graph with edges where `w > 0`.
pub(crate) fn connected_components(w: &DMatrix<f64>) -> (usize, Vec<usize>) {
    let n = w.nrows();
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = count;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if comp[v] == usize::MAX && (w[(u, v)] > 0.0 || w[(v, u)] > 0.0) {
                    comp[v] = count;
                    stack.push(v);
                }
            }
        }
        count += 1;
    }
    (count, comp)
}
