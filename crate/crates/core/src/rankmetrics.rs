//! Top-k similarity between two feature rankings: Jaccard@k, average
//! overlap (AO@k) and the top-k Kendall distance with penalty `p`.

use serde::{Deserialize, Serialize};

use crate::artifact::FeatureRanking;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    Jaccard,
    AverageOverlap,
    Kendall,
}

impl RankMetric {
    pub const ALL: [RankMetric; 3] = [RankMetric::Jaccard, RankMetric::AverageOverlap, RankMetric::Kendall];

    pub fn name(self) -> &'static str {
        match self {
            RankMetric::Jaccard => "jaccard",
            RankMetric::AverageOverlap => "ao",
            RankMetric::Kendall => "kendall",
        }
    }
}

/// Depth `k` and the Kendall penalty for pairs whose relative order is
/// unknowable from the two top-k lists.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKParams {
    pub k: usize,
    #[serde(default)]
    pub kendall_p: f64,
}

impl TopKParams {
    pub fn new(k: usize) -> Self {
        Self { k, kendall_p: 0.0 }
    }
}

pub fn score(metric: RankMetric, a: &FeatureRanking, b: &FeatureRanking, params: TopKParams) -> Result<f64> {
    match metric {
        RankMetric::Jaccard => jaccard_at_k(a, b, params.k),
        RankMetric::AverageOverlap => average_overlap(a, b, params.k),
        RankMetric::Kendall => kendall_topk(a, b, params.k, params.kendall_p),
    }
}

fn effective_k(a: &FeatureRanking, b: &FeatureRanking, k: usize) -> Result<usize> {
    if a.n_features() != b.n_features() {
        return Err(Error::UniverseMismatch { left: a.n_features(), right: b.n_features() });
    }
    if k == 0 {
        return invalid("top-k depth must be >= 1");
    }
    let p = a.n_features();
    if k > p {
        log::warn!("top-k depth {k} exceeds {p} features; clamped");
    }
    Ok(k.min(p))
}

/// Marks feature membership in a top-k prefix.
fn membership(order: &[usize], p: usize) -> Vec<bool> {
    let mut m = vec![false; p];
    order.iter().for_each(|&f| m[f] = true);
    m
}

/// |A_k ∩ B_k| / |A_k ∪ B_k|.
pub fn jaccard_at_k(a: &FeatureRanking, b: &FeatureRanking, k: usize) -> Result<f64> {
    let k = effective_k(a, b, k)?;
    let in_a = membership(a.top(k), a.n_features());
    let inter = b.top(k).iter().filter(|&&f| in_a[f]).count();
    Ok(inter as f64 / (2 * k - inter) as f64)
}

/// (1/k) Σ_{d=1..k} |A_d ∩ B_d| / d.
pub fn average_overlap(a: &FeatureRanking, b: &FeatureRanking, k: usize) -> Result<f64> {
    let k = effective_k(a, b, k)?;
    let p = a.n_features();
    let (oa, ob) = (a.order(), b.order());
    let mut in_a = vec![false; p];
    let mut in_b = vec![false; p];
    let mut inter = 0usize;
    let mut total = 0.0;
    for d in 0..k {
        let (x, y) = (oa[d], ob[d]);
        in_a[x] = true;
        in_b[y] = true;
        if x == y {
            inter += 1;
        } else {
            inter += usize::from(in_b[x]) + usize::from(in_a[y]);
        }
        total += inter as f64 / (d + 1) as f64;
    }
    Ok(total / k as f64)
}

/// Raw top-k Kendall distance K^(p) summed over unordered pairs of A_k ∪ B_k.
pub fn kendall_distance(a: &FeatureRanking, b: &FeatureRanking, k: usize, p: f64) -> Result<(f64, usize)> {
    let k = effective_k(a, b, k)?;
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("kendall penalty must lie in [0, 1], got {p}"));
    }
    let n = a.n_features();
    let mut pos_a = vec![usize::MAX; n];
    let mut pos_b = vec![usize::MAX; n];
    a.top(k).iter().enumerate().for_each(|(r, &f)| pos_a[f] = r);
    b.top(k).iter().enumerate().for_each(|(r, &f)| pos_b[f] = r);
    let mut union: Vec<usize> = a.top(k).to_vec();
    union.extend(b.top(k).iter().filter(|&&f| pos_a[f] == usize::MAX));

    let mut dist = 0.0;
    for (ii, &i) in union.iter().enumerate() {
        for &j in &union[ii + 1..] {
            dist += pair_penalty(pos_a[i], pos_a[j], pos_b[i], pos_b[j], p);
        }
    }
    Ok((dist, union.len()))
}

const ABSENT: usize = usize::MAX;

fn pair_penalty(ai: usize, aj: usize, bi: usize, bj: usize, p: f64) -> f64 {
    let (ia, ja, ib, jb) = (ai != ABSENT, aj != ABSENT, bi != ABSENT, bj != ABSENT);
    match (ia && ja, ib && jb) {
        // Both lists rank both items.
        (true, true) => f64::from(u8::from((ai < aj) != (bi < bj))),
        // One list ranks both; the other ranks exactly one, implying it is ahead.
        (true, false) if ib || jb => {
            let i_ahead_in_b = ib;
            f64::from(u8::from((ai < aj) != i_ahead_in_b))
        }
        (false, true) if ia || ja => {
            let i_ahead_in_a = ia;
            f64::from(u8::from((bi < bj) != i_ahead_in_a))
        }
        // One list ranks both, the other neither: order unknowable.
        (true, false) | (false, true) => p,
        // Each item appears in exactly one list, and not the same one.
        (false, false) => 1.0,
    }
}

/// Top-k Kendall similarity τ = 1 − 2·K^(p) / C(|A_k ∪ B_k|, 2), in [−1, 1].
pub fn kendall_topk(a: &FeatureRanking, b: &FeatureRanking, k: usize, p: f64) -> Result<f64> {
    let (dist, u) = kendall_distance(a, b, k, p)?;
    if u < 2 {
        return Ok(1.0);
    }
    let pairs = (u * (u - 1) / 2) as f64;
    // (C − 2K)/C keeps the integer cases exact.
    Ok((pairs - 2.0 * dist) / pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(order: &[usize]) -> FeatureRanking {
        FeatureRanking::from_order(order.to_vec()).unwrap()
    }

    fn from_top(top: &[usize], p: usize) -> FeatureRanking {
        let mut order = top.to_vec();
        order.extend((0..p).filter(|f| !top.contains(f)));
        r(&order)
    }

    #[test]
    fn jaccard_examples() {
        let a = from_top(&[1, 2, 3], 8);
        assert_eq!(jaccard_at_k(&a, &from_top(&[1, 2, 4], 8), 3).unwrap(), 0.5);
        assert_eq!(jaccard_at_k(&a, &from_top(&[4, 5, 6], 8), 3).unwrap(), 0.0);
        assert_eq!(jaccard_at_k(&a, &a, 5).unwrap(), 1.0);
    }

    #[test]
    fn average_overlap_examples() {
        let ao = average_overlap(&r(&[0, 1, 2]), &r(&[1, 0, 2]), 3).unwrap();
        assert!((ao - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(average_overlap(&from_top(&[0, 1], 4), &from_top(&[2, 3], 4), 2).unwrap(), 0.0);
    }

    #[test]
    fn kendall_examples() {
        assert_eq!(kendall_topk(&from_top(&[1, 2], 5), &from_top(&[2, 1], 5), 2, 0.0).unwrap(), -1.0);
        let t = kendall_topk(&from_top(&[1, 2], 5), &from_top(&[3, 4], 5), 2, 0.0).unwrap();
        assert!((t + 1.0 / 3.0).abs() < 1e-15);
        // p = 1 charges the two unknowable pairs as well: K = 6 over 6 pairs.
        assert_eq!(kendall_distance(&from_top(&[1, 2], 5), &from_top(&[3, 4], 5), 2, 1.0).unwrap(), (6.0, 4));
    }

    #[test]
    fn mismatched_universe_and_clamping() {
        assert!(matches!(jaccard_at_k(&r(&[0, 1]), &r(&[0, 1, 2]), 1), Err(Error::UniverseMismatch { .. })));
        assert_eq!(jaccard_at_k(&r(&[0, 1, 2]), &r(&[2, 1, 0]), 30).unwrap(), 1.0);
        assert!(jaccard_at_k(&r(&[0, 1]), &r(&[0, 1]), 0).is_err());
    }

    /// Direct pair enumeration of the four co-occurrence cases.
    fn kendall_oracle(a: &[usize], b: &[usize], k: usize, p: f64) -> f64 {
        let (ak, bk) = (&a[..k], &b[..k]);
        let mut u: Vec<usize> = ak.to_vec();
        u.extend(bk.iter().filter(|x| !ak.contains(x)));
        let pos = |l: &[usize], x: usize| l.iter().position(|&y| y == x);
        let mut d = 0.0;
        for x in 0..u.len() {
            for y in x + 1..u.len() {
                let (i, j) = (u[x], u[y]);
                d += match (pos(ak, i), pos(ak, j), pos(bk, i), pos(bk, j)) {
                    (Some(a1), Some(a2), Some(b1), Some(b2)) => ((a1 < a2) != (b1 < b2)) as u8 as f64,
                    (Some(a1), Some(a2), Some(_), None) => (a2 < a1) as u8 as f64,
                    (Some(a1), Some(a2), None, Some(_)) => (a1 < a2) as u8 as f64,
                    (Some(_), None, Some(b1), Some(b2)) => (b2 < b1) as u8 as f64,
                    (None, Some(_), Some(b1), Some(b2)) => (b1 < b2) as u8 as f64,
                    (Some(_), Some(_), None, None) | (None, None, Some(_), Some(_)) => p,
                    _ => 1.0,
                };
            }
        }
        let n = u.len();
        if n < 2 {
            1.0
        } else {
            1.0 - 2.0 * d / (n * (n - 1) / 2) as f64
        }
    }

    fn perm(p: usize) -> impl Strategy<Value = Vec<usize>> {
        Just((0..p).collect::<Vec<_>>()).prop_shuffle()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn kendall_matches_case_oracle((a, b) in (3usize..12).prop_flat_map(|p| (perm(p), perm(p))),
                                       k in 1usize..12, pen in 0.0f64..=1.0) {
            let k = k.min(a.len());
            let got = kendall_topk(&r(&a), &r(&b), k, pen).unwrap();
            prop_assert!((got - kendall_oracle(&a, &b, k, pen)).abs() < 1e-12);
        }

        #[test]
        fn full_depth_kendall_is_classical_tau((a, b) in (2usize..10).prop_flat_map(|p| (perm(p), perm(p))),
                                               pen in 0.0f64..=1.0) {
            let p = a.len();
            let pos_b: Vec<usize> = (0..p).map(|f| b.iter().position(|&x| x == f).unwrap()).collect();
            let mut disc = 0;
            for x in 0..p {
                for y in x + 1..p {
                    if pos_b[a[x]] > pos_b[a[y]] { disc += 1; }
                }
            }
            let tau = 1.0 - 2.0 * disc as f64 / (p * (p - 1) / 2) as f64;
            prop_assert!((kendall_topk(&r(&a), &r(&b), p, pen).unwrap() - tau).abs() < 1e-12);
        }

        #[test]
        fn ao_ignores_swaps_below_depth(a in perm(10), d in 1usize..8, s in 0usize..100) {
            let mut b = a.clone();
            let (x, y) = (d + s % (10 - d), d + (s / 10) % (10 - d));
            b.swap(x, y);
            prop_assert_eq!(average_overlap(&r(&a), &r(&b), d).unwrap(), average_overlap(&r(&a), &r(&a), d).unwrap());
            let c = perm_of(&a, s);
            let mut c2 = c.clone();
            c2.swap(x, y);
            prop_assert_eq!(average_overlap(&r(&a), &r(&c), d).unwrap(), average_overlap(&r(&a), &r(&c2), d).unwrap());
        }

        #[test]
        fn depth_one_metrics_agree(a in perm(6), b in perm(6)) {
            let ind = if a[0] == b[0] { 1.0 } else { 0.0 };
            prop_assert_eq!(average_overlap(&r(&a), &r(&b), 1).unwrap(), ind);
            prop_assert_eq!(jaccard_at_k(&r(&a), &r(&b), 1).unwrap(), ind);
        }
    }

    fn perm_of(a: &[usize], s: usize) -> Vec<usize> {
        let mut v = a.to_vec();
        v.rotate_left(s % a.len());
        v
    }
}
