//! Agreement between two partitions of the same samples.
//!
//! All four indices are computed from the contingency table. Logarithms are
//! natural. The same functions score a labeling against ground truth.

use serde::{Deserialize, Serialize};

use crate::artifact::ClusterLabeling;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMetric {
    Ari,
    FowlkesMallows,
    MutualInfo,
    VMeasure,
}

impl PartitionMetric {
    pub const ALL: [PartitionMetric; 4] =
        [PartitionMetric::Ari, PartitionMetric::FowlkesMallows, PartitionMetric::MutualInfo, PartitionMetric::VMeasure];

    pub fn name(self) -> &'static str {
        match self {
            PartitionMetric::Ari => "ari",
            PartitionMetric::FowlkesMallows => "fm",
            PartitionMetric::MutualInfo => "mi",
            PartitionMetric::VMeasure => "v_measure",
        }
    }

    pub fn score_labels(self, a: &[usize], b: &[usize]) -> Result<f64> {
        let t = ContingencyTable::from_labels(a, b)?;
        match self {
            PartitionMetric::Ari => t.ari(),
            PartitionMetric::FowlkesMallows => t.fowlkes_mallows(),
            PartitionMetric::MutualInfo => Ok(t.mutual_information()),
            PartitionMetric::VMeasure => Ok(t.v_measure(1.0)),
        }
    }

    pub fn score(self, a: &ClusterLabeling, b: &ClusterLabeling) -> Result<f64> {
        check_aligned(a, b)?;
        self.score_labels(a.labels(), b.labels())
    }
}

/// Co-membership counts `n_ij` between the clusters present in A (rows) and B (columns).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    n: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut code = vec![usize::MAX; max + 1];
    let mut next = 0;
    let out = labels
        .iter()
        .map(|&l| {
            if code[l] == usize::MAX {
                code[l] = next;
                next += 1;
            }
            code[l]
        })
        .collect();
    (out, next)
}

fn check_aligned(a: &ClusterLabeling, b: &ClusterLabeling) -> Result<()> {
    if a.sample_ids() != b.sample_ids() {
        return Err(Error::SampleIdMismatch);
    }
    Ok(())
}

#[inline]
fn comb2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

impl ContingencyTable {
    pub fn new(a: &ClusterLabeling, b: &ClusterLabeling) -> Result<Self> {
        check_aligned(a, b)?;
        Self::from_labels(a.labels(), b.labels())
    }

    pub fn from_labels(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return invalid(format!("label vectors differ in length ({} vs {})", a.len(), b.len()));
        }
        if a.is_empty() {
            return invalid("cannot compare empty labelings");
        }
        let (ca, ka) = compact(a);
        let (cb, kb) = compact(b);
        let mut counts = vec![vec![0u64; kb]; ka];
        for (&i, &j) in ca.iter().zip(&cb) {
            counts[i][j] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kb).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self { counts, row_sums, col_sums, n: a.len() as u64 })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn total(&self) -> u64 {
        self.n
    }

    fn pair_sums(&self) -> (f64, f64, f64) {
        let same_both: f64 = self.counts.iter().flatten().map(|&c| comb2(c)).sum();
        let same_a: f64 = self.row_sums.iter().map(|&c| comb2(c)).sum();
        let same_b: f64 = self.col_sums.iter().map(|&c| comb2(c)).sum();
        (same_both, same_a, same_b)
    }

    /// Adjusted Rand index. A zero denominator only arises for two identical
    /// trivial partitions (both all-singletons or both one cluster) and maps to 1.
    pub fn ari(&self) -> Result<f64> {
        if self.n < 2 {
            return invalid("ARI needs at least 2 samples");
        }
        let (index, sa, sb) = self.pair_sums();
        let expected = sa * sb / comb2(self.n);
        let max = 0.5 * (sa + sb);
        let denom = max - expected;
        if denom == 0.0 {
            return Ok(1.0);
        }
        Ok((index - expected) / denom)
    }

    /// √(PPV·TPR) over co-membership pairs. Two all-singleton partitions agree
    /// perfectly and score 1; otherwise an empty pair set on either side scores 0.
    pub fn fowlkes_mallows(&self) -> Result<f64> {
        if self.n < 2 {
            return invalid("Fowlkes-Mallows needs at least 2 samples");
        }
        let (tp, sa, sb) = self.pair_sums();
        if sa == 0.0 && sb == 0.0 {
            return Ok(1.0);
        }
        if sa == 0.0 || sb == 0.0 {
            return Ok(0.0);
        }
        Ok((tp / sa).sqrt() * (tp / sb).sqrt())
    }

    fn entropy(sums: &[u64], n: f64) -> f64 {
        -sums.iter().filter(|&&c| c > 0).map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        }).sum::<f64>()
    }

    pub fn entropy_a(&self) -> f64 {
        Self::entropy(&self.row_sums, self.n as f64)
    }

    pub fn entropy_b(&self) -> f64 {
        Self::entropy(&self.col_sums, self.n as f64)
    }

    pub fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let c = c as f64;
                mi += c / n * (c * n / (self.row_sums[i] as f64 * self.col_sums[j] as f64)).ln();
            }
        }
        mi.max(0.0)
    }

    /// Returns (homogeneity, completeness) with h = 1 − H(A|B)/H(A) and
    /// c = 1 − H(B|A)/H(B); a side with zero entropy scores 1.
    pub fn homogeneity_completeness(&self) -> (f64, f64) {
        let (ha, hb) = (self.entropy_a(), self.entropy_b());
        let mi = self.mutual_information();
        // H(A|B) = H(A) − MI
        let h = if ha == 0.0 { 1.0 } else { (mi / ha).clamp(0.0, 1.0) };
        let c = if hb == 0.0 { 1.0 } else { (mi / hb).clamp(0.0, 1.0) };
        (h, c)
    }

    /// (1+β)·h·c / (β·c + h).
    pub fn v_measure(&self, beta: f64) -> f64 {
        let (h, c) = self.homogeneity_completeness();
        let denom = beta * c + h;
        if denom == 0.0 {
            0.0
        } else {
            (1.0 + beta) * h * c / denom
        }
    }
}

pub fn contingency(a: &ClusterLabeling, b: &ClusterLabeling) -> Result<ContingencyTable> {
    ContingencyTable::new(a, b)
}

pub fn ari(a: &ClusterLabeling, b: &ClusterLabeling) -> Result<f64> {
    ContingencyTable::new(a, b)?.ari()
}

pub fn fowlkes_mallows(a: &ClusterLabeling, b: &ClusterLabeling) -> Result<f64> {
    ContingencyTable::new(a, b)?.fowlkes_mallows()
}

pub fn mutual_information(a: &ClusterLabeling, b: &ClusterLabeling) -> Result<f64> {
    Ok(ContingencyTable::new(a, b)?.mutual_information())
}

pub fn v_measure(a: &ClusterLabeling, b: &ClusterLabeling, beta: f64) -> Result<f64> {
    if beta.is_nan() || beta <= 0.0 {
        return invalid("v-measure beta must be positive");
    }
    Ok(ContingencyTable::new(a, b)?.v_measure(beta))
}
