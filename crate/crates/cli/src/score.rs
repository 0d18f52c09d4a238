//! Stability scores recomputed from the artifacts of a run directory.
//!
//! Scoring reads only files: `run.json` when present, otherwise the layout
//! `artifacts/<group>/<method>/<repeat>.csv` written by any tool that follows
//! the artifact schemas. Artifacts are always re-read from disk, so a score
//! is a function of the files alone.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stabx_core::nnmetrics;
use stabx_core::rankmetrics::{RankMetric, TopKParams};
use stabx_core::rng::derive_seed;
use stabx_core::stability::{self, CellScore, PairScorer};
use stabx_core::{ClusterLabeling, Interpretation, InterpretationKind, PredictionSet, SampleId, TaskKind};

use crate::artifacts::{self, kind_name};
use crate::config::MetricConfig;
use crate::error::{CliError, Result};
use crate::pipeline::{
    artifact_path, predictions_path, read_status, status_path, Condition, DatasetInfo, GroupInfo, MethodInfo, RunIndex, RUN_VERSION,
};

pub const SCORES_FILE: &str = "scores/scores.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WithinRow {
    pub group: String,
    pub dataset: String,
    pub condition: Condition,
    pub method: String,
    pub kind: InterpretationKind,
    /// Embedding rank of dimension-reduction cells.
    pub rank: Option<usize>,
    pub n_total: usize,
    pub n_ok: usize,
    pub metric: String,
    /// `None` marks a missing cell.
    pub cell: Option<CellScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub dataset: String,
    pub metric: String,
    pub x: f64,
    pub y: Option<f64>,
    pub n_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetweenRow {
    pub dataset: String,
    pub method_a: String,
    pub method_b: String,
    pub metric: String,
    pub value: Option<f64>,
    pub n_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub dataset: String,
    pub method: String,
    pub kind: InterpretationKind,
    pub metric: String,
    pub value: Option<f64>,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub dataset: String,
    pub method: String,
    pub value: Option<f64>,
    pub n_repeats: usize,
    /// Test samples seen in fewer than two repeats.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub version: u32,
    pub metrics: MetricConfig,
    pub datasets: Vec<DatasetInfo>,
    pub methods: Vec<MethodInfo>,
    pub within: Vec<WithinRow>,
    pub k_sweep: Vec<SweepRow>,
    pub nn_sweep: Vec<SweepRow>,
    pub between: Vec<BetweenRow>,
    pub prediction_between: Vec<BetweenRow>,
    pub prediction_within: Vec<PredictionRow>,
    pub accuracy: Vec<AccuracyRow>,
}

/// Index of `run_dir`, read from `run.json` or reconstructed from its files.
pub fn load_index(run_dir: &Path) -> Result<RunIndex> {
    if let Some(index) = RunIndex::load(run_dir)? {
        return Ok(index);
    }
    discover(run_dir)
}

fn sorted_dirs(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(path)? {
        let e = e?;
        if e.file_type()?.is_dir() {
            out.push(e.file_name().to_string_lossy().into_owned());
        }
    }
    out.sort();
    Ok(out)
}

fn repeat_files(dir: &Path) -> Result<Vec<usize>> {
    let mut reps = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let name = e?.file_name().to_string_lossy().into_owned();
        if let Some(r) = name.strip_suffix(".csv").and_then(|s| s.parse::<usize>().ok()) {
            reps.push(r);
        }
    }
    reps.sort_unstable();
    Ok(reps)
}

fn parse_group_id(id: &str) -> (String, Condition) {
    if let Some((ds, cond)) = id.split_once('~') {
        if let Some(s) = cond.strip_prefix("sigma=").and_then(|v| v.parse().ok()) {
            return (ds.to_string(), Condition::Sigma { sigma: s });
        }
        if let Some(r) = cond.strip_prefix("rank=").and_then(|v| v.parse().ok()) {
            return (ds.to_string(), Condition::Rank { rank: r });
        }
    }
    (id.to_string(), Condition::Base)
}

/// Index for a directory of externally produced artifacts.
fn discover(run_dir: &Path) -> Result<RunIndex> {
    let root = run_dir.join("artifacts");
    if !root.is_dir() {
        return Err(CliError::fatal(format!("{} has no artifacts/ directory", run_dir.display())));
    }
    let mut groups = Vec::new();
    let mut methods: Vec<MethodInfo> = Vec::new();
    let mut datasets: Vec<DatasetInfo> = Vec::new();
    for gid in sorted_dirs(&root)? {
        let (dataset, condition) = parse_group_id(&gid);
        let mut gm = Vec::new();
        let mut repeats = 0;
        for mid in sorted_dirs(&root.join(&gid))? {
            let reps = repeat_files(&root.join(&gid).join(&mid))?;
            let Some(&last) = reps.last() else { continue };
            repeats = repeats.max(last + 1);
            let first = artifact_path(run_dir, &gid, &mid, reps[0]);
            let kind = artifacts::read_interpretation(&first)?.kind();
            match methods.iter().find(|m| m.id == mid) {
                Some(m) if m.kind != kind => {
                    return Err(CliError::fatal(format!("method `{mid}` has artifacts of different kinds")));
                }
                Some(_) => {}
                None => methods.push(MethodInfo { id: mid.clone(), kind, spec: String::new() }),
            }
            gm.push(mid);
        }
        if gm.is_empty() {
            continue;
        }
        if !datasets.iter().any(|d| d.id == dataset) {
            datasets.push(DatasetInfo {
                id: dataset.clone(),
                task: TaskKind::Unsupervised,
                n_samples: 0,
                n_features: 0,
                data_hash: String::new(),
                k_clusters: None,
                truth_file: None,
                classes: None,
                constant_columns: vec![],
            });
        }
        let rank = match condition {
            Condition::Rank { rank } => Some(rank),
            _ => None,
        };
        groups.push(GroupInfo {
            id: gid,
            dataset,
            condition,
            plan_file: String::new(),
            plan_fingerprint: String::new(),
            repeats,
            methods: gm,
            rank,
        });
    }
    if groups.is_empty() {
        return Err(CliError::fatal(format!("no artifacts found under {}", root.display())));
    }
    Ok(RunIndex {
        version: RUN_VERSION,
        config_hash: String::new(),
        seed: 0,
        metrics: MetricConfig::default(),
        datasets,
        methods,
        groups,
    })
}

/// Successful repeats of one cell, parsed.
struct Cell<'a> {
    group: &'a GroupInfo,
    method: &'a MethodInfo,
    items: Vec<(usize, Interpretation)>,
}

impl Cell<'_> {
    fn missing(&self) -> bool {
        self.items.len() < 2 || stability::too_many_failures(self.group.repeats, self.items.len())
    }

    fn interpretations(&self) -> Vec<Interpretation> {
        self.items.iter().map(|(_, i)| i.clone()).collect()
    }
}

fn repeat_ok(run_dir: &Path, g: &str, m: &str, r: usize) -> bool {
    let art = artifact_path(run_dir, g, m, r);
    if !art.exists() {
        return false;
    }
    read_status(&status_path(run_dir, g, m, r)).is_none_or(|s| s.is_ok())
}

fn load_cell<'a>(run_dir: &Path, group: &'a GroupInfo, method: &'a MethodInfo) -> Result<Cell<'a>> {
    let mut items = Vec::new();
    for r in 0..group.repeats {
        if !repeat_ok(run_dir, &group.id, &method.id, r) {
            continue;
        }
        let interp = artifacts::read_interpretation(&artifact_path(run_dir, &group.id, &method.id, r))?;
        if interp.kind() != method.kind {
            return Err(CliError::fatal(format!(
                "mixed artifact kinds in cell {}/{}: repeat {r} is {}, expected {}",
                group.id,
                method.id,
                kind_name(interp.kind()),
                kind_name(method.kind)
            )));
        }
        items.push((r, interp));
    }
    Ok(Cell { group, method, items })
}

fn n_features(items: &[(usize, Interpretation)]) -> usize {
    match items.first() {
        Some((_, Interpretation::Ranking(r))) => r.n_features(),
        _ => 0,
    }
}

fn scorer(kind: InterpretationKind, m: &MetricConfig, p: usize, seed: u64) -> PairScorer {
    match kind {
        InterpretationKind::FeatureImportance => {
            PairScorer::Rank { metric: m.rank_metric, params: TopKParams { k: m.k.min(p.max(1)), kendall_p: m.kendall_p } }
        }
        InterpretationKind::Clustering => PairScorer::Partition { metric: m.partition_metric },
        InterpretationKind::DimensionReduction => {
            PairScorer::Neighbors { grid_size: m.nn_grid, sample_cap: m.nn_sample_cap, seed: derive_seed(seed, 0x4e4e) }
        }
    }
}

struct CellResult {
    within: WithinRow,
    k_sweep: Vec<SweepRow>,
    nn_sweep: Vec<SweepRow>,
}

fn score_cell(cell: &Cell, m: &MetricConfig, seed: u64) -> Result<CellResult> {
    let kind = cell.method.kind;
    let sc = scorer(kind, m, n_features(&cell.items), seed);
    let mut k_sweep = Vec::new();
    let mut nn_sweep = Vec::new();
    let score = if cell.missing() {
        None
    } else {
        let interps = cell.interpretations();
        let base = matches!(cell.group.condition, Condition::Base);
        if base && kind == InterpretationKind::FeatureImportance {
            let p = n_features(&cell.items);
            for metric in RankMetric::ALL {
                for k in 1..=m.k_sweep_max.min(p) {
                    let s = PairScorer::Rank { metric, params: TopKParams { k, kendall_p: m.kendall_p } };
                    let c = stability::within_method(&interps, &s)?;
                    k_sweep.push(SweepRow {
                        method: cell.method.id.clone(),
                        dataset: cell.group.dataset.clone(),
                        metric: metric.name().to_string(),
                        x: k as f64,
                        y: c.mean,
                        n_pairs: c.n_pairs,
                    });
                }
            }
        }
        if base && kind == InterpretationKind::DimensionReduction {
            if let PairScorer::Neighbors { grid_size, sample_cap, seed } = sc {
                for (k, y, n) in nn_curve(&interps, grid_size, sample_cap, seed)? {
                    nn_sweep.push(SweepRow {
                        method: cell.method.id.clone(),
                        dataset: cell.group.dataset.clone(),
                        metric: "nn_jaccard".into(),
                        x: k as f64,
                        y: Some(y),
                        n_pairs: n,
                    });
                }
            }
        }
        Some(stability::within_method(&interps, &sc)?)
    };
    let within = WithinRow {
        group: cell.group.id.clone(),
        dataset: cell.group.dataset.clone(),
        condition: cell.group.condition,
        method: cell.method.id.clone(),
        kind,
        rank: (kind == InterpretationKind::DimensionReduction).then_some(cell.group.rank).flatten(),
        n_total: cell.group.repeats,
        n_ok: cell.items.len(),
        metric: sc.metric_id(),
        cell: score,
    };
    Ok(CellResult { within, k_sweep, nn_sweep })
}

/// Mean NN-Jaccard curve over all pairs, on the k grid of the smallest
/// common sample set; each pair's curve is linearly interpolated onto it.
fn nn_curve(items: &[Interpretation], grid: usize, cap: usize, seed: u64) -> Result<Vec<(usize, f64, usize)>> {
    let mut curves = Vec::new();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let (Interpretation::Embedding(a), Interpretation::Embedding(b)) = (&items[i], &items[j]) else {
                continue;
            };
            let mut common: Vec<SampleId> = {
                let in_b: std::collections::HashSet<&SampleId> = b.sample_ids().iter().collect();
                a.sample_ids().iter().filter(|s| in_b.contains(s)).cloned().collect()
            };
            common.sort();
            if common.len() < 2 {
                continue;
            }
            let c = nnmetrics::nn_jaccard_auc(&a.restrict_to(&common)?, &b.restrict_to(&common)?, grid, cap, seed)?;
            curves.push(c);
        }
    }
    let Some(n_min) = curves.iter().map(|c| *c.k_grid.last().expect("non-empty grid")).min() else {
        return Ok(vec![]);
    };
    let ks = nnmetrics::k_grid(n_min, grid);
    let mut out = Vec::with_capacity(ks.len());
    for &k in &ks {
        let sum: f64 = curves.iter().map(|c| interpolate(&c.k_grid, &c.scores, k)).sum();
        out.push((k, sum / curves.len() as f64, curves.len()));
    }
    Ok(out)
}

fn interpolate(xs: &[usize], ys: &[f64], x: usize) -> f64 {
    match xs.binary_search(&x) {
        Ok(i) => ys[i],
        Err(0) => ys[0],
        Err(i) if i >= xs.len() => ys[ys.len() - 1],
        Err(i) => {
            let (x0, x1) = (xs[i - 1] as f64, xs[i] as f64);
            let t = (x as f64 - x0) / (x1 - x0);
            ys[i - 1] + t * (ys[i] - ys[i - 1])
        }
    }
}

fn between_rows(cells: &[&Cell], m: &MetricConfig, seed: u64) -> Result<Vec<BetweenRow>> {
    let mut rows = Vec::new();
    for a in cells {
        for b in cells {
            if a.method.kind != b.method.kind {
                continue;
            }
            let sc = scorer(a.method.kind, m, n_features(&a.items), seed);
            let mut value = None;
            let mut n_pairs = 0;
            if !a.missing() && !b.missing() {
                let bmap: BTreeMap<usize, &Interpretation> = b.items.iter().map(|(r, i)| (*r, i)).collect();
                let (xa, xb): (Vec<Interpretation>, Vec<Interpretation>) = a
                    .items
                    .iter()
                    .filter_map(|(r, i)| bmap.get(r).map(|j| (i.clone(), (*j).clone())))
                    .unzip();
                if !xa.is_empty() {
                    let c = stability::between_method(&xa, 0, &xb, 0, &sc)?;
                    value = c.mean;
                    n_pairs = c.n_pairs;
                }
            }
            rows.push(BetweenRow {
                dataset: a.group.dataset.clone(),
                method_a: a.method.id.clone(),
                method_b: b.method.id.clone(),
                metric: sc.metric_id(),
                value,
                n_pairs,
            });
        }
    }
    Ok(rows)
}

fn read_truth(run_dir: &Path, ds: &DatasetInfo) -> Result<Option<HashMap<SampleId, String>>> {
    let Some(file) = &ds.truth_file else { return Ok(None) };
    let (ids, values) = artifacts::read_predictions_like(&run_dir.join(file), "truth")?;
    Ok(Some(ids.into_iter().zip(values).collect()))
}

struct Supervised {
    accuracy: Vec<AccuracyRow>,
    within: Vec<PredictionRow>,
    between: Vec<BetweenRow>,
}

/// Repeat index, sample ids and raw prediction strings.
type RepeatPredictions = (usize, Vec<SampleId>, Vec<String>);

/// Accuracy, prediction stability and prediction agreement of the
/// feature-importance methods of one supervised group.
fn supervised_scores(run_dir: &Path, ds: &DatasetInfo, cells: &[&Cell], m: &MetricConfig) -> Result<Supervised> {
    let mut out = Supervised { accuracy: vec![], within: vec![], between: vec![] };
    let Some(truth) = read_truth(run_dir, ds)? else { return Ok(out) };
    let classification = ds.task == TaskKind::Classification;
    let cells: Vec<&&Cell> = cells.iter().filter(|c| c.method.kind == InterpretationKind::FeatureImportance && !c.missing()).collect();

    // Raw predictions per cell and repeat.
    let mut raw: Vec<Vec<RepeatPredictions>> = Vec::new();
    for c in &cells {
        let mut per = Vec::new();
        for (r, _) in &c.items {
            let p = predictions_path(run_dir, &c.group.id, &c.method.id, *r);
            if p.exists() {
                let (ids, vals) = artifacts::read_predictions(&p, None, !classification)?;
                per.push((*r, ids, vals));
            }
        }
        raw.push(per);
    }
    let mut alphabet: Vec<String> = ds.classes.clone().unwrap_or_default();
    let mut code: HashMap<String, usize> = alphabet.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    if classification {
        for per in &raw {
            for (_, _, vals) in per {
                for v in vals {
                    if !code.contains_key(v) {
                        code.insert(v.clone(), alphabet.len());
                        alphabet.push(v.clone());
                    }
                }
            }
        }
    }
    let lookup = |id: &SampleId| -> Result<&String> {
        truth.get(id).ok_or_else(|| CliError::fatal(format!("prediction for unknown sample `{id}`")))
    };
    let real = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|_| CliError::fatal(format!("`{s}` is not a number"))) };
    let mut sets: Vec<Vec<(usize, PredictionSet)>> = Vec::new();
    for per in &raw {
        let mut v = Vec::new();
        for (r, ids, vals) in per {
            let set = if classification {
                let pred = vals.iter().map(|s| code[s]).collect();
                let tru = ids.iter().map(|id| lookup(id).map(|t| code[t])).collect::<Result<Vec<_>>>()?;
                PredictionSet::classes(ids.clone(), pred, tru, alphabet.len())?
            } else {
                let pred = vals.iter().map(|s| real(s)).collect::<Result<Vec<_>>>()?;
                let tru = ids.iter().map(|id| lookup(id).and_then(|t| real(t))).collect::<Result<Vec<_>>>()?;
                PredictionSet::new(
                    ids.clone(),
                    stabx_core::artifact::PredictionValues::Reals(pred),
                    stabx_core::artifact::PredictionValues::Reals(tru),
                )?
            };
            v.push((*r, set));
        }
        sets.push(v);
    }

    let acc_metric = if classification { "accuracy" } else { "exp_neg_mse" };
    for (c, s) in cells.iter().zip(&sets) {
        let accs = s.iter().map(|(_, p)| stability::accuracy(p)).collect::<stabx_core::Result<Vec<f64>>>()?;
        out.accuracy.push(AccuracyRow {
            dataset: ds.id.clone(),
            method: c.method.id.clone(),
            kind: InterpretationKind::FeatureImportance,
            metric: acc_metric.into(),
            value: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
            n: accs.len(),
        });
        let only: Vec<PredictionSet> = s.iter().map(|(_, p)| p.clone()).collect();
        let ps = if only.is_empty() { None } else { Some(stability::prediction_stability(&only)?) };
        out.within.push(PredictionRow {
            dataset: ds.id.clone(),
            method: c.method.id.clone(),
            value: ps.as_ref().and_then(|p| p.mean),
            n_repeats: only.len(),
            excluded: ps.map_or(0, |p| p.excluded),
        });
    }

    let common = |idx: &[usize]| -> Vec<usize> {
        let mut reps: Vec<usize> = sets[idx[0]].iter().map(|(r, _)| *r).collect();
        for &i in &idx[1..] {
            reps.retain(|r| sets[i].iter().any(|(q, _)| q == r));
        }
        reps
    };
    let pick = |i: usize, reps: &[usize]| -> Vec<PredictionSet> {
        sets[i].iter().filter(|(r, _)| reps.contains(r)).map(|(_, p)| p.clone()).collect()
    };
    if classification {
        for i in 0..cells.len() {
            for j in 0..cells.len() {
                let reps = common(&[i, j]);
                let value = if reps.is_empty() {
                    None
                } else {
                    Some(stability::between_prediction_classification(&pick(i, &reps), &pick(j, &reps))?)
                };
                out.between.push(BetweenRow {
                    dataset: ds.id.clone(),
                    method_a: cells[i].method.id.clone(),
                    method_b: cells[j].method.id.clone(),
                    metric: "label_agreement".into(),
                    value,
                    n_pairs: reps.len(),
                });
            }
        }
    } else if cells.len() >= 2 {
        let all: Vec<usize> = (0..cells.len()).collect();
        let reps = common(&all);
        let matrix = if reps.is_empty() {
            None
        } else {
            let preds: Vec<Vec<PredictionSet>> = all.iter().map(|&i| pick(i, &reps)).collect();
            Some(stability::between_prediction_regression(&preds, m.mse_normalization)?)
        };
        for i in 0..cells.len() {
            for j in 0..cells.len() {
                out.between.push(BetweenRow {
                    dataset: ds.id.clone(),
                    method_a: cells[i].method.id.clone(),
                    method_b: cells[j].method.id.clone(),
                    metric: "mse_agreement".into(),
                    value: matrix.as_ref().map(|mx| mx.scores[i][j]),
                    n_pairs: reps.len(),
                });
            }
        }
    }
    Ok(out)
}

fn clustering_accuracy(run_dir: &Path, ds: &DatasetInfo, cells: &[&Cell], m: &MetricConfig) -> Result<Vec<AccuracyRow>> {
    let Some(truth) = read_truth(run_dir, ds)? else { return Ok(vec![]) };
    let classes = ds.classes.clone().unwrap_or_default();
    let code: HashMap<&String, usize> = classes.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut ids: Vec<SampleId> = truth.keys().cloned().collect();
    ids.sort();
    let labels = ids
        .iter()
        .map(|id| code.get(&truth[id]).copied().ok_or_else(|| CliError::fatal(format!("truth class of `{id}` not in alphabet"))))
        .collect::<Result<Vec<_>>>()?;
    let truth = ClusterLabeling::new(ids, labels, classes.len().max(1))?;
    let mut rows = Vec::new();
    for c in cells.iter().filter(|c| c.method.kind == InterpretationKind::Clustering && !c.missing()) {
        let mut accs = Vec::new();
        for (_, i) in &c.items {
            if let Interpretation::Labels(l) = i {
                accs.push(stability::accuracy_clustering(l, &truth, m.partition_metric)?);
            }
        }
        rows.push(AccuracyRow {
            dataset: ds.id.clone(),
            method: c.method.id.clone(),
            kind: InterpretationKind::Clustering,
            metric: m.partition_metric.name().into(),
            value: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
            n: accs.len(),
        });
    }
    Ok(rows)
}

/// Recomputes every score of `run_dir` with `metrics` and writes `scores/`.
pub fn score_run(run_dir: &Path, metrics: &MetricConfig) -> Result<Scores> {
    let problems = metrics.problems();
    if !problems.is_empty() {
        return Err(CliError::Config(problems));
    }
    let index = load_index(run_dir)?;
    let mut cells = Vec::new();
    for g in &index.groups {
        for mid in &g.methods {
            let m = index.method(mid).ok_or_else(|| CliError::fatal(format!("group {} names unknown method `{mid}`", g.id)))?;
            cells.push((g, m));
        }
    }
    let cells: Vec<Cell> = cells.par_iter().map(|(g, m)| load_cell(run_dir, g, m)).collect::<Result<_>>()?;
    let results: Vec<CellResult> = cells.par_iter().map(|c| score_cell(c, metrics, index.seed)).collect::<Result<_>>()?;

    let base_groups: Vec<&GroupInfo> = index.groups.iter().filter(|g| g.condition == Condition::Base).collect();
    let per_group = base_groups
        .par_iter()
        .map(|g| -> Result<(Vec<BetweenRow>, Option<Supervised>, Vec<AccuracyRow>)> {
            let gc: Vec<&Cell> = cells.iter().filter(|c| c.group.id == g.id).collect();
            let between = between_rows(&gc, metrics, index.seed)?;
            let ds = index.dataset(&g.dataset);
            let sup = match ds {
                Some(d) if d.task != TaskKind::Unsupervised => Some(supervised_scores(run_dir, d, &gc, metrics)?),
                _ => None,
            };
            let clu = match ds {
                Some(d) if d.task == TaskKind::Unsupervised => clustering_accuracy(run_dir, d, &gc, metrics)?,
                _ => vec![],
            };
            Ok((between, sup, clu))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut scores = Scores {
        version: RUN_VERSION,
        metrics: *metrics,
        datasets: index.datasets.clone(),
        methods: index.methods.clone(),
        within: vec![],
        k_sweep: vec![],
        nn_sweep: vec![],
        between: vec![],
        prediction_between: vec![],
        prediction_within: vec![],
        accuracy: vec![],
    };
    for r in results {
        scores.within.push(r.within);
        scores.k_sweep.extend(r.k_sweep);
        scores.nn_sweep.extend(r.nn_sweep);
    }
    for (between, sup, clu) in per_group {
        scores.between.extend(between);
        if let Some(s) = sup {
            scores.accuracy.extend(s.accuracy);
            scores.prediction_within.extend(s.within);
            scores.prediction_between.extend(s.between);
        }
        scores.accuracy.extend(clu);
    }
    write_scores(run_dir, &scores)?;
    Ok(scores)
}

pub fn load_scores(run_dir: &Path) -> Result<Scores> {
    let p = run_dir.join(SCORES_FILE);
    let bytes = std::fs::read(&p).map_err(|e| CliError::fatal(format!("cannot read {}: {e}; run `stabx score` first", p.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

fn write_scores(run_dir: &Path, s: &Scores) -> Result<()> {
    let dir = run_dir.join("scores");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(run_dir.join(SCORES_FILE), serde_json::to_string_pretty(s)? + "\n")?;

    let mut w = csv::Writer::from_path(dir.join("within.csv"))?;
    w.write_record(["group", "dataset", "method", "kind", "metric", "value", "n_total", "n_ok", "n_pairs", "n_skipped"])?;
    for r in &s.within {
        let c = r.cell.as_ref();
        w.write_record([
            r.group.as_str(),
            &r.dataset,
            &r.method,
            kind_name(r.kind),
            &r.metric,
            &num(c.and_then(|c| c.mean)),
            &r.n_total.to_string(),
            &r.n_ok.to_string(),
            &c.map_or(0, |c| c.n_pairs).to_string(),
            &c.map_or(0, |c| c.n_skipped).to_string(),
        ])?;
    }
    w.flush()?;

    for (name, rows) in [("between.csv", &s.between), ("prediction_between.csv", &s.prediction_between)] {
        let mut w = csv::Writer::from_path(dir.join(name))?;
        w.write_record(["dataset", "method_a", "method_b", "metric", "value", "n_pairs"])?;
        for r in rows {
            w.write_record([r.dataset.as_str(), &r.method_a, &r.method_b, &r.metric, &num(r.value), &r.n_pairs.to_string()])?;
        }
        w.flush()?;
    }

    for (name, rows) in [("sweep_k.csv", &s.k_sweep), ("sweep_nn.csv", &s.nn_sweep)] {
        write_sweep(&dir.join(name), rows)?;
    }

    let mut w = csv::Writer::from_path(dir.join("accuracy.csv"))?;
    w.write_record(["dataset", "method", "kind", "metric", "value", "n"])?;
    for r in &s.accuracy {
        w.write_record([r.dataset.as_str(), &r.method, kind_name(r.kind), &r.metric, &num(r.value), &r.n.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("prediction_stability.csv"))?;
    w.write_record(["dataset", "method", "value", "n_repeats", "excluded"])?;
    for r in &s.prediction_within {
        w.write_record([r.dataset.as_str(), &r.method, &num(r.value), &r.n_repeats.to_string(), &r.excluded.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "dataset", "metric", "x", "y", "n_pairs"])?;
    for r in rows {
        w.write_record([r.method.as_str(), &r.dataset, &r.metric, &format!("{:?}", r.x), &num(r.y), &r.n_pairs.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_ids_parse() {
        assert_eq!(parse_group_id("iris"), ("iris".into(), Condition::Base));
        assert_eq!(parse_group_id("iris~sigma=0.5"), ("iris".into(), Condition::Sigma { sigma: 0.5 }));
        assert_eq!(parse_group_id("iris~rank=5"), ("iris".into(), Condition::Rank { rank: 5 }));
    }

    #[test]
    fn interpolation() {
        let xs = [1, 3, 5];
        let ys = [0.0, 1.0, 0.5];
        assert_eq!(interpolate(&xs, &ys, 2), 0.5);
        assert_eq!(interpolate(&xs, &ys, 5), 0.5);
        assert_eq!(interpolate(&xs, &ys, 4), 0.75);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        assert!(score_run(d.path(), &MetricConfig::default()).is_err());
        std::fs::create_dir(d.path().join("artifacts")).unwrap();
        assert!(score_run(d.path(), &MetricConfig::default()).is_err());
    }

    fn write_cell(root: &Path, group: &str, method: &str, files: &[&str]) {
        let dir = root.join("artifacts").join(group).join(method);
        std::fs::create_dir_all(&dir).unwrap();
        for (r, body) in files.iter().enumerate() {
            std::fs::write(dir.join(format!("{r}.csv")), body).unwrap();
        }
    }

    #[test]
    fn external_artifacts_are_scored_and_rescored() {
        let d = tempfile::tempdir().unwrap();
        let a = "feature_index,score\n0,5\n1,4\n2,3\n3,2\n4,1\n5,0\n";
        let b = "feature_index,score\n0,4\n1,5\n2,3\n3,2\n4,0\n5,1\n";
        write_cell(d.path(), "toy", "m", &[a, b, a]);
        let k10 = score_run(d.path(), &MetricConfig::default()).unwrap();
        let k1 = score_run(d.path(), &MetricConfig { k: 1, ..MetricConfig::default() }).unwrap();
        assert_eq!(k10.within[0].metric, "ao@6");
        assert_eq!(k1.within[0].metric, "ao@1");
        // Pairs (a,b), (a,a), (b,a): top-1 agrees only for (a,a).
        assert!((k1.within[0].cell.as_ref().unwrap().mean.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_ne!(k10.within[0].cell, k1.within[0].cell);
    }

    #[test]
    fn mixed_kinds_in_one_cell_are_rejected() {
        let d = tempfile::tempdir().unwrap();
        write_cell(d.path(), "toy", "m", &["feature_index,score\n0,1\n1,0\n", "sample_id,label\na,0\nb,1\n"]);
        let err = score_run(d.path(), &MetricConfig::default()).unwrap_err();
        assert!(err.to_string().contains("mixed artifact kinds"), "{err}");
    }

    #[test]
    fn fowlkes_mallows_rescoring_changes_the_table() {
        let d = tempfile::tempdir().unwrap();
        let a = "sample_id,label\n0,0\n1,0\n2,1\n3,1\n4,1\n";
        let b = "sample_id,label\n0,0\n1,1\n2,1\n3,1\n4,1\n";
        write_cell(d.path(), "blobs", "km", &[a, b]);
        let ari = score_run(d.path(), &MetricConfig::default()).unwrap();
        let fm = score_run(
            d.path(),
            &MetricConfig { partition_metric: stabx_core::partmetrics::PartitionMetric::FowlkesMallows, ..MetricConfig::default() },
        )
        .unwrap();
        assert_eq!(ari.within[0].metric, "ari");
        assert_eq!(fm.within[0].metric, "fm");
        assert_ne!(ari.within[0].cell.as_ref().unwrap().mean, fm.within[0].cell.as_ref().unwrap().mean);
    }
}
