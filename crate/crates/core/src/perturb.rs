//! Seeded, replayable perturbation plans.
//!
//! A plan records everything needed to regenerate each repeat: explicit
//! index sets for splits and subsamples, and the derived per-repeat seed for
//! additive noise. Serializing a plan and replaying it reproduces the same
//! index sets and the same noise matrices bit for bit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{invalid, Error, Result};
use crate::rng::{self, derive_seed, seeded};

pub const PLAN_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Normal(0, σ²): `sigma` is the standard deviation.
    Normal,
    /// Laplace(0, b): `sigma` is the scale b, so the variance is 2b².
    Laplace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanKind {
    Split { ratio: f64 },
    Subsample { fraction: f64 },
    Noise { distribution: NoiseDistribution, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepeatPlan {
    pub index: usize,
    pub seed: u64,
    /// Training rows (split) or retained rows (subsample), ascending.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retained: Option<Vec<usize>>,
    /// Test rows of a split, ascending.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_out: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub version: u32,
    #[serde(flatten)]
    pub kind: PlanKind,
    pub base_seed: u64,
    pub n_samples: usize,
    pub repeats: Vec<RepeatPlan>,
}

/// The data one repeat sees.
#[derive(Clone, Debug)]
pub struct Replicate {
    pub train: TabularDataset,
    pub test: Option<TabularDataset>,
}

fn check_repeats(repeats: usize) -> Result<()> {
    if repeats < 2 {
        return invalid(format!("need at least 2 repeats, got {repeats}"));
    }
    Ok(())
}

fn retained_count(n: usize, frac: f64, allow_full: bool) -> Result<usize> {
    let kept = (frac * n as f64).round() as usize;
    if kept == 0 || (kept >= n && !allow_full) {
        return Err(Error::DegenerateSplit { kept, total: n });
    }
    Ok(kept.min(n))
}

/// `repeats` independent uniform train/test splits with `round(ratio·N)` training rows.
pub fn make_splits(dataset: &TabularDataset, ratio: f64, repeats: usize, base_seed: u64) -> Result<PerturbationPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return invalid(format!("split ratio must lie in (0, 1), got {ratio}"));
    }
    check_repeats(repeats)?;
    let n = dataset.n_samples();
    let n_train = retained_count(n, ratio, false)?;
    let repeats = (0..repeats)
        .map(|r| {
            let seed = derive_seed(base_seed, r as u64);
            let mut perm = rng::sample_without_replacement(n, n, &mut seeded(seed));
            let mut test = perm.split_off(n_train);
            perm.sort_unstable();
            test.sort_unstable();
            RepeatPlan { index: r, seed, retained: Some(perm), held_out: Some(test) }
        })
        .collect();
    Ok(PerturbationPlan { version: PLAN_VERSION, kind: PlanKind::Split { ratio }, base_seed, n_samples: n, repeats })
}

/// `repeats` subsamples of `round(fraction·N)` rows drawn without replacement.
/// `fraction = 1` is allowed and yields the full index set every time.
pub fn make_subsamples(dataset: &TabularDataset, fraction: f64, repeats: usize, base_seed: u64) -> Result<PerturbationPlan> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return invalid(format!("subsample fraction must lie in (0, 1], got {fraction}"));
    }
    check_repeats(repeats)?;
    let n = dataset.n_samples();
    let kept = retained_count(n, fraction, true)?;
    let repeats = (0..repeats)
        .map(|r| {
            let seed = derive_seed(base_seed, r as u64);
            let mut idx = rng::sample_without_replacement(n, kept, &mut seeded(seed));
            idx.sort_unstable();
            RepeatPlan { index: r, seed, retained: Some(idx), held_out: None }
        })
        .collect();
    Ok(PerturbationPlan {
        version: PLAN_VERSION,
        kind: PlanKind::Subsample { fraction },
        base_seed,
        n_samples: n,
        repeats,
    })
}

/// `repeats` additive-noise replicates of the full dataset.
pub fn make_noise(
    dataset: &TabularDataset,
    distribution: NoiseDistribution,
    sigma: f64,
    repeats: usize,
    base_seed: u64,
) -> Result<PerturbationPlan> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return invalid(format!("noise scale must be a finite value >= 0, got {sigma}"));
    }
    check_repeats(repeats)?;
    let repeats = (0..repeats)
        .map(|r| RepeatPlan { index: r, seed: derive_seed(base_seed, r as u64), retained: None, held_out: None })
        .collect();
    Ok(PerturbationPlan {
        version: PLAN_VERSION,
        kind: PlanKind::Noise { distribution, sigma },
        base_seed,
        n_samples: dataset.n_samples(),
        repeats,
    })
}

/// Features plus i.i.d. noise drawn row by row from the repeat's seed. Targets are untouched.
pub fn apply_noise(dataset: &TabularDataset, distribution: NoiseDistribution, sigma: f64, repeat_seed: u64) -> Result<TabularDataset> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return invalid(format!("noise scale must be a finite value >= 0, got {sigma}"));
    }
    if sigma == 0.0 {
        return Ok(dataset.clone());
    }
    let (n, p) = dataset.features().shape();
    let mut rng = seeded(repeat_seed);
    let mut noise = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            noise[(i, j)] = match distribution {
                NoiseDistribution::Normal => sigma * rng::standard_normal(&mut rng),
                NoiseDistribution::Laplace => rng::laplace(&mut rng, sigma),
            };
        }
    }
    dataset.with_features(dataset.features() + noise)
}

/// Evenly spaced inclusive grid from `lo` to `hi`.
pub fn sigma_sweep(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if !(hi.is_finite() && (0.0..=hi).contains(&lo)) {
        return invalid(format!("sigma sweep needs 0 <= lo <= hi, got ({lo}, {hi})"));
    }
    if lo == hi {
        if steps == 0 {
            return invalid("sigma sweep needs at least one step");
        }
        return Ok(vec![lo]);
    }
    if steps < 2 {
        return invalid(format!("sigma sweep over [{lo}, {hi}] needs >= 2 steps, got {steps}"));
    }
    let step = (hi - lo) / (steps - 1) as f64;
    Ok((0..steps).map(|i| if i + 1 == steps { hi } else { lo + step * i as f64 }).collect())
}

impl PerturbationPlan {
    pub fn len(&self) -> usize {
        self.repeats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.repeats.is_empty()
    }

    /// Regenerates the data seen by repeat `r`.
    pub fn materialize(&self, dataset: &TabularDataset, r: usize) -> Result<Replicate> {
        if dataset.n_samples() != self.n_samples {
            return invalid(format!(
                "plan built for {} samples, dataset has {}",
                self.n_samples,
                dataset.n_samples()
            ));
        }
        let rep = self.repeats.get(r).ok_or_else(|| Error::Invalid(format!("no repeat {r} in plan")))?;
        match self.kind {
            PlanKind::Split { .. } | PlanKind::Subsample { .. } => {
                let retained = rep.retained.as_deref().ok_or_else(|| Error::Invalid("repeat lacks indices".into()))?;
                let train = dataset.select_rows(retained)?;
                let test = rep.held_out.as_deref().map(|h| dataset.select_rows(h)).transpose()?;
                Ok(Replicate { train, test })
            }
            PlanKind::Noise { distribution, sigma } => {
                Ok(Replicate { train: apply_noise(dataset, distribution, sigma, rep.seed)?, test: None })
            }
        }
    }

    /// Structural 64-bit FNV-1a fingerprint over kind, seeds and index sets.
    /// Two plans with equal fingerprints drive identical repeats.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::default();
        h.u64(self.version as u64);
        match self.kind {
            PlanKind::Split { ratio } => {
                h.u64(1);
                h.u64(ratio.to_bits());
            }
            PlanKind::Subsample { fraction } => {
                h.u64(2);
                h.u64(fraction.to_bits());
            }
            PlanKind::Noise { distribution, sigma } => {
                h.u64(3);
                h.u64(distribution as u64);
                h.u64(sigma.to_bits());
            }
        }
        h.u64(self.base_seed);
        h.u64(self.n_samples as u64);
        for rep in &self.repeats {
            h.u64(rep.index as u64);
            h.u64(rep.seed);
            for set in [&rep.retained, &rep.held_out] {
                match set {
                    Some(v) => {
                        h.u64(v.len() as u64);
                        v.iter().for_each(|&i| h.u64(i as u64));
                    }
                    None => h.u64(u64::MAX),
                }
            }
        }
        h.0
    }
}

struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn toy(n: usize, p: usize) -> TabularDataset {
        TabularDataset::from_matrix(DMatrix::from_fn(n, p, |i, j| (i * p + j) as f64)).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = toy(10, 2);
        let plan = make_splits(&ds, 0.7, 5, 99).unwrap();
        for rep in &plan.repeats {
            assert_eq!(rep.retained.as_ref().unwrap().len(), 7);
            assert_eq!(rep.held_out.as_ref().unwrap().len(), 3);
        }
        assert_eq!(plan, make_splits(&ds, 0.7, 5, 99).unwrap());
        assert_ne!(plan, make_splits(&ds, 0.7, 5, 100).unwrap());
    }

    #[test]
    fn degenerate_split_errors() {
        let ds = toy(3, 1);
        assert!(matches!(make_splits(&ds, 0.01, 3, 0), Err(Error::DegenerateSplit { kept: 0, .. })));
        assert!(matches!(make_splits(&ds, 0.99, 3, 0), Err(Error::DegenerateSplit { .. })));
        assert!(make_splits(&ds, 0.5, 1, 0).is_err());
    }

    #[test]
    fn subsample_sizes() {
        let plan = make_subsamples(&toy(100, 1), 0.7, 4, 5).unwrap();
        for rep in &plan.repeats {
            let idx = rep.retained.as_ref().unwrap();
            assert_eq!(idx.len(), 70);
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
        let full = make_subsamples(&toy(10, 1), 1.0, 3, 5).unwrap();
        for rep in &full.repeats {
            assert_eq!(rep.retained.as_deref().unwrap(), (0..10).collect::<Vec<_>>().as_slice());
        }
    }

    #[test]
    fn subsample_intersections_obey_set_bounds() {
        let plan = make_subsamples(&toy(10, 1), 0.7, 20, 17).unwrap();
        for a in &plan.repeats {
            for b in &plan.repeats {
                let (sa, sb) = (a.retained.as_ref().unwrap(), b.retained.as_ref().unwrap());
                let inter = sa.iter().filter(|i| sb.contains(i)).count();
                assert!((4..=7).contains(&inter), "{inter}");
            }
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let ds = toy(6, 3);
        assert_eq!(apply_noise(&ds, NoiseDistribution::Normal, 0.0, 1).unwrap(), ds);
        assert!(apply_noise(&ds, NoiseDistribution::Normal, -0.1, 1).is_err());
    }

    #[test]
    fn noise_scale_matches_sigma() {
        let n = 4000;
        let ds = toy(n, 3);
        let noisy = apply_noise(&ds, NoiseDistribution::Normal, 0.15, 42).unwrap();
        let diff = noisy.features() - ds.features();
        for j in 0..3 {
            let col = diff.column(j);
            let mean = col.mean();
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!((sd - 0.15).abs() < 3.0 * 0.15 / (n as f64).sqrt(), "sd {sd}");
        }
    }

    #[test]
    fn noise_is_seed_determined() {
        let ds = toy(20, 4);
        for dist in [NoiseDistribution::Normal, NoiseDistribution::Laplace] {
            let a = apply_noise(&ds, dist, 1.0, 7).unwrap();
            assert_eq!(a, apply_noise(&ds, dist, 1.0, 7).unwrap());
            assert_ne!(a, apply_noise(&ds, dist, 1.0, 8).unwrap());
        }
    }

    #[test]
    fn empirical_noise_moments() {
        let n = 20_000;
        let ds = toy(n, 1);
        for (dist, var) in [(NoiseDistribution::Normal, 1.44f64), (NoiseDistribution::Laplace, 2.0 * 1.44)] {
            let noisy = apply_noise(&ds, dist, 1.2, 3).unwrap();
            let d = noisy.features() - ds.features();
            let mean = d.mean();
            let v = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() < 4.0 * var.sqrt() / (n as f64).sqrt());
            assert!((v / var - 1.0).abs() < 0.1, "{dist:?} var {v}");
        }
    }

    #[test]
    fn sweep_grid() {
        assert_eq!(sigma_sweep(0.0, 5.0, 6).unwrap(), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(sigma_sweep(0.15, 0.15, 1).unwrap(), vec![0.15]);
        assert!(sigma_sweep(1.0, 0.0, 3).is_err());
        assert!(sigma_sweep(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn materialize_replays_plan() {
        let ds = toy(12, 2);
        let plan = make_splits(&ds, 0.75, 3, 1).unwrap();
        let rep = plan.materialize(&ds, 1).unwrap();
        assert_eq!(rep.train.n_samples(), 9);
        assert_eq!(rep.test.unwrap().n_samples(), 3);
        let noise = make_noise(&ds, NoiseDistribution::Laplace, 0.5, 2, 1).unwrap();
        let a = noise.materialize(&ds, 0).unwrap().train;
        assert_eq!(a, apply_noise(&ds, NoiseDistribution::Laplace, 0.5, noise.repeats[0].seed).unwrap());
    }

    #[test]
    fn plan_json_round_trip_keeps_fingerprint() {
        let ds = toy(15, 2);
        let plan = make_splits(&ds, 0.7, 4, 3).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        let back: PerturbationPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plan);
        assert_eq!(back.fingerprint(), plan.fingerprint());
        assert_ne!(plan.fingerprint(), make_splits(&ds, 0.7, 4, 4).unwrap().fingerprint());
    }

    proptest! {
        #[test]
        fn splits_partition_every_repeat(n in 4usize..60, ratio in 0.2f64..0.8, seed in any::<u64>()) {
            let ds = toy(n, 1);
            if let Ok(plan) = make_splits(&ds, ratio, 3, seed) {
                for rep in &plan.repeats {
                    let mut all: Vec<usize> = rep.retained.clone().unwrap();
                    prop_assert_eq!(all.len(), (ratio * n as f64).round() as usize);
                    all.extend(rep.held_out.clone().unwrap());
                    all.sort_unstable();
                    prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                }
            }
        }
    }
}
