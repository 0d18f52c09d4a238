//! Agglomerative clustering with Lance–Williams distance updates.
//!
//! Clusters live in slots indexed by their smallest member. Merging `i < j`
//! keeps slot `i`, and the next merge is the pair with the smallest linkage
//! distance, ties broken by `(i, j)` lexicographically. Ward works on squared
//! euclidean distances.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::distance::DistanceMetric;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Complete,
    Average,
    Ward,
}

impl Linkage {
    pub const ALL: [Linkage; 4] = [Linkage::Single, Linkage::Complete, Linkage::Average, Linkage::Ward];

    pub fn name(self) -> &'static str {
        match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
            Linkage::Ward => "ward",
        }
    }

    pub fn check(self, metric: DistanceMetric) -> Result<()> {
        if self == Linkage::Ward && metric != DistanceMetric::Euclidean {
            return invalid(format!("ward linkage requires euclidean distance, got {}", metric.name()));
        }
        Ok(())
    }

    /// Distance from `k` to the union of `i` and `j`.
    fn update(self, dik: f64, djk: f64, dij: f64, ni: f64, nj: f64, nk: f64) -> f64 {
        match self {
            Linkage::Single => dik.min(djk),
            Linkage::Complete => dik.max(djk),
            Linkage::Average => (ni * dik + nj * djk) / (ni + nj),
            Linkage::Ward => ((ni + nk) * dik + (nj + nk) * djk - nk * dij) / (ni + nj + nk),
        }
    }
}

/// The full sequence of N−1 merges as `(kept slot, absorbed slot, distance)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MergeTree {
    pub n: usize,
    pub merges: Vec<(usize, usize, f64)>,
}

impl MergeTree {
    /// Labels after the first N−K merges, numbered by smallest member.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.n {
            return invalid(format!("cluster count must lie in 1..={}, got {k}", self.n));
        }
        let mut slot: Vec<usize> = (0..self.n).collect();
        for &(i, j, _) in &self.merges[..self.n - k] {
            for s in slot.iter_mut() {
                if *s == j {
                    *s = i;
                }
            }
        }
        let mut code = vec![usize::MAX; self.n];
        let mut next = 0;
        for s in 0..self.n {
            if slot[s] == s {
                code[s] = next;
                next += 1;
            }
        }
        Ok(slot.iter().map(|&s| code[s]).collect())
    }
}

pub fn distance_matrix(x: &DMatrix<f64>, metric: DistanceMetric) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = metric.distance(x.row(i).iter(), x.row(j).iter());
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Builds the merge tree from a symmetric dissimilarity matrix.
pub fn agglomerate(mut d: DMatrix<f64>, linkage: Linkage) -> MergeTree {
    let n = d.nrows();
    let mut active = vec![true; n];
    let mut size = vec![1.0f64; n];
    // Nearest active partner j > i of every active slot i.
    let mut nn = vec![usize::MAX; n];
    let mut nnd = vec![f64::INFINITY; n];
    let refresh = |i: usize, d: &DMatrix<f64>, active: &[bool], nn: &mut [usize], nnd: &mut [f64]| {
        nn[i] = usize::MAX;
        nnd[i] = f64::INFINITY;
        for j in i + 1..n {
            if active[j] && d[(i, j)] < nnd[i] {
                nn[i] = j;
                nnd[i] = d[(i, j)];
            }
        }
    };
    for i in 0..n {
        refresh(i, &d, &active, &mut nn, &mut nnd);
    }
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut i = usize::MAX;
        for s in 0..n {
            if active[s] && nn[s] != usize::MAX && (i == usize::MAX || nnd[s] < nnd[i]) {
                i = s;
            }
        }
        let j = nn[i];
        let dij = d[(i, j)];
        merges.push((i, j, dij));
        active[j] = false;
        for k in 0..n {
            if !active[k] || k == i {
                continue;
            }
            let v = linkage.update(d[(i, k)], d[(j, k)], dij, size[i], size[j], size[k]);
            d[(i, k)] = v;
            d[(k, i)] = v;
        }
        size[i] += size[j];
        refresh(i, &d, &active, &mut nn, &mut nnd);
        for k in 0..n {
            if !active[k] || k == i {
                continue;
            }
            if nn[k] == i || nn[k] == j {
                refresh(k, &d, &active, &mut nn, &mut nnd);
            } else if k < i && (d[(k, i)] < nnd[k] || (d[(k, i)] == nnd[k] && i < nn[k])) {
                nn[k] = i;
                nnd[k] = d[(k, i)];
            }
        }
    }
    MergeTree { n, merges }
}

pub fn merge_tree(x: &DMatrix<f64>, linkage: Linkage, metric: DistanceMetric) -> Result<MergeTree> {
    linkage.check(metric)?;
    if x.nrows() == 0 {
        return invalid("cannot cluster zero samples");
    }
    let d = if linkage == Linkage::Ward {
        super::linalg::pairwise_sq_euclidean(x)
    } else {
        distance_matrix(x, metric)
    };
    Ok(agglomerate(d, linkage))
}

/// Agglomerative clustering cut at `k` clusters.
pub fn hierarchical(x: &DMatrix<f64>, k: usize, linkage: Linkage, metric: DistanceMetric) -> Result<Vec<usize>> {
    if k == 0 || k > x.nrows() {
        return invalid(format!("cluster count must lie in 1..={}, got {k}", x.nrows()));
    }
    merge_tree(x, linkage, metric)?.cut(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, standard_normal};
    use proptest::prelude::*;

    /// O(N³)-per-merge agglomeration over explicit member sets, linkage
    /// evaluated from the original points every time.
    fn brute_force(x: &DMatrix<f64>, linkage: Linkage, metric: DistanceMetric) -> Vec<(usize, usize)> {
        let n = x.nrows();
        let dist = |a: usize, b: usize| metric.distance(x.row(a).iter(), x.row(b).iter());
        let link = |a: &[usize], b: &[usize]| -> f64 {
            let pairs = a.iter().flat_map(|&p| b.iter().map(move |&q| (p, q)));
            match linkage {
                Linkage::Single => pairs.map(|(p, q)| dist(p, q)).fold(f64::INFINITY, f64::min),
                Linkage::Complete => pairs.map(|(p, q)| dist(p, q)).fold(0.0, f64::max),
                Linkage::Average => pairs.map(|(p, q)| dist(p, q)).sum::<f64>() / (a.len() * b.len()) as f64,
                Linkage::Ward => {
                    let centroid = |s: &[usize]| -> Vec<f64> {
                        (0..x.ncols()).map(|j| s.iter().map(|&p| x[(p, j)]).sum::<f64>() / s.len() as f64).collect()
                    };
                    let (ca, cb) = (centroid(a), centroid(b));
                    let sq: f64 = ca.iter().zip(&cb).map(|(u, v)| (u - v).powi(2)).sum();
                    let (na, nb) = (a.len() as f64, b.len() as f64);
                    2.0 * na * nb / (na + nb) * sq
                }
            }
        };
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut out = Vec::new();
        while clusters.len() > 1 {
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let v = link(&clusters[a], &clusters[b]);
                    if v < best.0 - 1e-9 {
                        best = (v, a, b);
                    }
                }
            }
            let (_, a, b) = best;
            out.push((clusters[a][0], clusters[b][0]));
            let absorbed = clusters.remove(b);
            clusters[a].extend(absorbed);
            clusters[a].sort_unstable();
        }
        out
    }

    fn pairs(tree: &MergeTree) -> Vec<(usize, usize)> {
        tree.merges.iter().map(|&(i, j, _)| (i, j)).collect()
    }

    #[test]
    fn three_points_single() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 10.0]);
        assert_eq!(hierarchical(&x, 2, Linkage::Single, DistanceMetric::Euclidean).unwrap(), vec![0, 0, 1]);
        assert_eq!(hierarchical(&x, 3, Linkage::Single, DistanceMetric::Euclidean).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn chain_single_and_complete() {
        // Slightly stretched gaps break every tie.
        let pts: Vec<f64> = (0..10).map(|i| i as f64 + 0.01 * (i * i) as f64).collect();
        let x = DMatrix::from_column_slice(10, 1, &pts);
        for linkage in [Linkage::Single, Linkage::Complete] {
            let tree = merge_tree(&x, linkage, DistanceMetric::Euclidean).unwrap();
            assert_eq!(pairs(&tree), brute_force(&x, linkage, DistanceMetric::Euclidean));
        }
        let complete = hierarchical(&x, 2, Linkage::Complete, DistanceMetric::Euclidean).unwrap();
        let split = complete.iter().position(|&l| l == 1).unwrap();
        assert!((4..=6).contains(&split), "{complete:?}");
        assert!(complete[..split].iter().all(|&l| l == 0) && complete[split..].iter().all(|&l| l == 1));
        let single = hierarchical(&x, 2, Linkage::Single, DistanceMetric::Euclidean).unwrap();
        assert_eq!(single, [vec![0; 9], vec![1]].concat());
    }

    #[test]
    fn ward_needs_euclidean() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 10.0]);
        assert!(hierarchical(&x, 2, Linkage::Ward, DistanceMetric::Manhattan).is_err());
    }

    fn cloud(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = seeded(seed);
        DMatrix::from_fn(n, p, |_, _| standard_normal(&mut rng))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matches_brute_force(seed in 0u64..10_000, n in 2usize..12, li in 0usize..4, mi in 0usize..5) {
            let linkage = Linkage::ALL[li];
            let metric = if linkage == Linkage::Ward { DistanceMetric::Euclidean } else { DistanceMetric::ALL[mi] };
            let x = cloud(n, 3, seed);
            let tree = merge_tree(&x, linkage, metric).unwrap();
            prop_assert_eq!(tree.merges.len(), n - 1);
            prop_assert_eq!(pairs(&tree), brute_force(&x, linkage, metric));
            for k in 1..=n {
                let labels = tree.cut(k).unwrap();
                let mut distinct = labels.clone();
                distinct.sort_unstable();
                distinct.dedup();
                prop_assert_eq!(distinct, (0..k).collect::<Vec<_>>());
            }
        }
    }
}
