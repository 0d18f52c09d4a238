//! perturb → interpret → score → report.
//!
//! Work is planned up front as a flat list of (group, method, repeat) jobs in
//! canonical order. A group is one dataset under one condition: the base
//! perturbation, one noise scale, or one extra embedding rank. Jobs run on a
//! work-stealing pool; every job writes only its own files, so the run
//! directory does not depend on scheduling.
//!
//! Layout of a run directory:
//!
//! ```text
//! run.json                               index read by `score` and `report`
//! plans/<group>.json                     perturbation plans
//! plans/<dataset>.truth.csv              targets or ground-truth classes
//! artifacts/<group>/<method>/<r>.csv     interpretation of repeat r
//! artifacts/<group>/<method>/<r>.pred.csv
//! artifacts/<group>/<method>/<r>.status.json
//! artifacts/<group>/<method>/<r>.work/   runner manifest, inputs and logs
//! scores/  report/
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stabx_core::methods::{self, MethodInputs};
use stabx_core::perturb::{make_noise, make_splits, make_subsamples, PerturbationPlan};
use stabx_core::rng::derive_seed;
use stabx_core::{InterpretationKind, TabularDataset, TaskKind, Target};

use crate::artifacts::{self, write_interpretation, write_method_predictions, write_predictions};
use crate::config::{hex, LoadedDataset, MetricConfig, ResolvedConfig};
use crate::error::{CliError, Result};
use crate::runner::{self, OutputPaths, RunnerManifest, RunnerStatus, MANIFEST_VERSION};

pub const RUN_VERSION: u32 = 1;
pub const RUN_INDEX: &str = "run.json";
/// Column name used for the response in files handed to runners.
const TARGET_COLUMN: &str = "target";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    Base,
    Sigma { sigma: f64 },
    Rank { rank: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub task: TaskKind,
    pub n_samples: usize,
    pub n_features: usize,
    pub data_hash: String,
    #[serde(default)]
    pub k_clusters: Option<usize>,
    /// `plans/<id>.truth.csv` when targets or truth classes exist.
    #[serde(default)]
    pub truth_file: Option<String>,
    /// Class alphabet of a classification target or of the truth column.
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    #[serde(default)]
    pub constant_columns: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodInfo {
    pub id: String,
    pub kind: InterpretationKind,
    pub spec: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupInfo {
    pub id: String,
    pub dataset: String,
    pub condition: Condition,
    pub plan_file: String,
    pub plan_fingerprint: String,
    pub repeats: usize,
    pub methods: Vec<String>,
    /// Embedding rank used by dimension-reduction methods in this group.
    #[serde(default)]
    pub rank: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunIndex {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub metrics: MetricConfig,
    pub datasets: Vec<DatasetInfo>,
    pub methods: Vec<MethodInfo>,
    pub groups: Vec<GroupInfo>,
}

impl RunIndex {
    pub fn load(run_dir: &Path) -> Result<Option<Self>> {
        let p = run_dir.join(RUN_INDEX);
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_slice(&std::fs::read(&p)?)?))
    }

    pub fn dataset(&self, id: &str) -> Option<&DatasetInfo> {
        self.datasets.iter().find(|d| d.id == id)
    }

    pub fn method(&self, id: &str) -> Option<&MethodInfo> {
        self.methods.iter().find(|m| m.id == id)
    }
}

/// Persisted outcome of one job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub key: String,
    pub repeat: usize,
    pub seed: u64,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl JobStatus {
    pub fn is_ok(&self) -> bool {
        self.outcome == "ok"
    }
}

pub fn artifact_path(run_dir: &Path, group: &str, method: &str, repeat: usize) -> PathBuf {
    run_dir.join("artifacts").join(group).join(method).join(format!("{repeat}.csv"))
}

pub fn predictions_path(run_dir: &Path, group: &str, method: &str, repeat: usize) -> PathBuf {
    run_dir.join("artifacts").join(group).join(method).join(format!("{repeat}.pred.csv"))
}

pub fn status_path(run_dir: &Path, group: &str, method: &str, repeat: usize) -> PathBuf {
    run_dir.join("artifacts").join(group).join(method).join(format!("{repeat}.status.json"))
}

pub fn read_status(path: &Path) -> Option<JobStatus> {
    serde_json::from_slice(&std::fs::read(path).ok()?).ok()
}

struct Group {
    info: GroupInfo,
    dataset: usize,
    plan: PerturbationPlan,
    rank: Option<usize>,
}

struct Job {
    group: usize,
    method: usize,
    repeat: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobReport {
    pub group: String,
    pub method: String,
    pub repeat: usize,
    pub outcome: String,
    pub skipped: bool,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub jobs: Vec<JobReport>,
}

impl RunSummary {
    pub fn failed(&self) -> usize {
        self.jobs.iter().filter(|j| j.outcome != "ok").count()
    }

    pub fn skipped(&self) -> usize {
        self.jobs.iter().filter(|j| j.skipped).count()
    }

    pub fn exit_code(&self) -> i32 {
        if self.failed() > 0 {
            2
        } else {
            0
        }
    }
}

struct Ctx<'a> {
    run_dir: &'a Path,
    cfg: &'a ResolvedConfig,
    data: Vec<TabularDataset>,
    hashes: Vec<String>,
    groups: Vec<Group>,
}

fn sha(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn id_seed(id: &str) -> u64 {
    let d = Sha256::digest(id.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Runs the whole pipeline for a validated configuration.
pub fn run(cfg: &ResolvedConfig, workers: Option<usize>) -> Result<RunSummary> {
    let run_dir = cfg.output_dir.clone();
    for sub in ["plans", "artifacts", "scores", "report"] {
        std::fs::create_dir_all(run_dir.join(sub))?;
    }
    let ctx = prepare(&run_dir, cfg)?;
    let jobs = plan_jobs(&ctx);
    let workers = workers.unwrap_or(cfg.config.workers).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::fatal(format!("cannot start worker pool: {e}")))?;
    log::info!("{} jobs on {workers} worker(s)", jobs.len());
    let reports = pool.install(|| jobs.par_iter().map(|j| execute(&ctx, j)).collect::<Result<Vec<_>>>())?;

    let index = index(&ctx);
    write_json(&run_dir.join(RUN_INDEX), &index)?;
    pool.install(|| crate::score::score_run(&run_dir, &cfg.config.metrics))?;
    crate::report::build_report(&run_dir)?;
    Ok(RunSummary { run_dir, jobs: reports })
}

fn prepare<'a>(run_dir: &'a Path, cfg: &'a ResolvedConfig) -> Result<Ctx<'a>> {
    let c = &cfg.config;
    let mut data = Vec::new();
    let mut hashes = Vec::new();
    let mut groups = Vec::new();
    for (di, ld) in cfg.datasets.iter().enumerate() {
        let ds = if c.standardize { ld.data.standardize().dataset } else { ld.data.clone() };
        let mut bytes = Vec::new();
        ds.write_csv(&mut bytes, TARGET_COLUMN)?;
        bytes.extend_from_slice(format!("\n{:?}", ds.task()).as_bytes());
        hashes.push(sha(&bytes));
        write_truth(run_dir, ld, &ds)?;

        let id = &ld.config.id;
        let dseed = derive_seed(c.seed, id_seed(id));
        let p = &c.perturbation;
        let supervised = ds.task() != TaskKind::Unsupervised;
        let base = if supervised {
            make_splits(&ds, p.split_ratio, p.repeats, derive_seed(dseed, 0))?
        } else {
            make_subsamples(&ds, p.subsample_fraction, p.repeats, derive_seed(dseed, 0))?
        };
        let kinds_for = |allowed: &[InterpretationKind]| -> Vec<usize> {
            c.methods.iter().enumerate().filter(|(_, m)| m.kind().is_some_and(|k| allowed.contains(&k))).map(|(i, _)| i).collect()
        };
        let unsup = [InterpretationKind::Clustering, InterpretationKind::DimensionReduction];
        let base_methods = if supervised { kinds_for(&[InterpretationKind::FeatureImportance]) } else { kinds_for(&unsup) };
        let base_rank = p.dr_ranks[0].min(ds.n_features());
        let plan_file = format!("plans/{id}.json");
        write_json(&run_dir.join(&plan_file), &base)?;
        let mut add = |gid: String, condition, plan: PerturbationPlan, plan_file: String, methods: Vec<usize>, rank| {
            if methods.is_empty() {
                return;
            }
            let info = GroupInfo {
                id: gid,
                dataset: id.clone(),
                condition,
                plan_file,
                plan_fingerprint: format!("{:016x}", plan.fingerprint()),
                repeats: plan.len(),
                methods: methods.iter().map(|&m| c.methods[m].id.clone()).collect(),
                rank,
            };
            groups.push((Group { info, dataset: di, plan, rank }, methods));
        };
        let dr = kinds_for(&[InterpretationKind::DimensionReduction]);
        add(id.clone(), Condition::Base, base.clone(), plan_file.clone(), base_methods, (!dr.is_empty() && !supervised).then_some(base_rank));
        if !supervised {
            let mut extra: Vec<usize> = p.dr_ranks.iter().map(|&r| r.min(ds.n_features())).filter(|&r| r != base_rank).collect();
            extra.sort_unstable();
            extra.dedup();
            for r in extra {
                add(format!("{id}~rank={r}"), Condition::Rank { rank: r }, base.clone(), plan_file.clone(), dr.clone(), Some(r));
            }
            if let Some(noise) = &p.noise {
                let reps = noise.repeats.unwrap_or(p.repeats);
                for sigma in noise.scales().map_err(CliError::config)? {
                    let plan = make_noise(&ds, noise.distribution, sigma, reps, derive_seed(dseed, 1))?;
                    let gid = format!("{id}~sigma={sigma}");
                    let file = format!("plans/{gid}.json");
                    write_json(&run_dir.join(&file), &plan)?;
                    add(gid, Condition::Sigma { sigma }, plan, file, kinds_for(&unsup), (!dr.is_empty()).then_some(base_rank));
                }
            }
        }
        data.push(ds);
    }
    let groups = groups
        .into_iter()
        .map(|(g, _)| g)
        .collect();
    Ok(Ctx { run_dir, cfg, data, hashes, groups })
}

/// `sample_id,truth` for the full dataset, so scores never need the source CSV.
fn write_truth(run_dir: &Path, ld: &LoadedDataset, ds: &TabularDataset) -> Result<()> {
    let values: Option<Vec<String>> = match (ds.target(), &ld.truth) {
        (Some(Target::Real(v)), _) => Some(v.iter().map(|x| format!("{x:?}")).collect()),
        (Some(Target::Class { labels, classes }), _) => Some(labels.iter().map(|&l| classes[l].clone()).collect()),
        (None, Some((labels, classes))) => Some(labels.iter().map(|&l| classes[l].clone()).collect()),
        (None, None) => None,
    };
    if let Some(values) = values {
        let path = run_dir.join(format!("plans/{}.truth.csv", ld.config.id));
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample_id", "truth"])?;
        for (id, v) in ds.samples().iter().zip(values) {
            w.write_record([id.as_str(), v.as_str()])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn plan_jobs(ctx: &Ctx) -> Vec<Job> {
    let mut jobs = Vec::new();
    for (gi, g) in ctx.groups.iter().enumerate() {
        for mid in &g.info.methods {
            let method = ctx.cfg.config.methods.iter().position(|m| &m.id == mid).expect("group methods come from the config");
            for repeat in 0..g.plan.len() {
                jobs.push(Job { group: gi, method, repeat });
            }
        }
    }
    jobs
}

fn index(ctx: &Ctx) -> RunIndex {
    let c = &ctx.cfg.config;
    let datasets = ctx
        .cfg
        .datasets
        .iter()
        .zip(&ctx.data)
        .zip(&ctx.hashes)
        .map(|((ld, ds), h)| {
            let classes = match (ds.target(), &ld.truth) {
                (Some(Target::Class { classes, .. }), _) => Some(classes.clone()),
                (None, Some((_, classes))) => Some(classes.clone()),
                _ => None,
            };
            let has_truth = ds.target().is_some() || ld.truth.is_some();
            DatasetInfo {
                id: ld.config.id.clone(),
                task: ds.task(),
                n_samples: ds.n_samples(),
                n_features: ds.n_features(),
                data_hash: h.clone(),
                k_clusters: ld.k_clusters,
                truth_file: has_truth.then(|| format!("plans/{}.truth.csv", ld.config.id)),
                classes,
                constant_columns: if c.standardize { ld.data.standardize().constant_columns } else { vec![] },
            }
        })
        .collect();
    let methods = c
        .methods
        .iter()
        .map(|m| MethodInfo { id: m.id.clone(), kind: m.kind().expect("validated"), spec: m.fingerprint() })
        .collect();
    RunIndex {
        version: RUN_VERSION,
        config_hash: ctx.cfg.config_hash.clone(),
        seed: c.seed,
        metrics: c.metrics,
        datasets,
        methods,
        groups: ctx.groups.iter().map(|g| g.info.clone()).collect(),
    }
}

fn execute(ctx: &Ctx, job: &Job) -> Result<JobReport> {
    let g = &ctx.groups[job.group];
    let m = &ctx.cfg.config.methods[job.method];
    let ld = &ctx.cfg.datasets[g.dataset];
    let ds = &ctx.data[g.dataset];
    let rep = &g.plan.repeats[job.repeat];
    let seed = derive_seed(rep.seed, 1);
    let kind = m.kind().expect("validated");
    let k_clusters = (kind == InterpretationKind::Clustering).then_some(ld.k_clusters).flatten();
    let rank = (kind == InterpretationKind::DimensionReduction).then_some(g.rank).flatten();

    let key = sha(
        serde_json::json!({
            "data": ctx.hashes[g.dataset],
            "method": m.fingerprint(),
            "plan": g.info.plan_fingerprint,
            "repeat": job.repeat,
            "k_clusters": k_clusters,
            "rank": rank,
        })
        .to_string()
        .as_bytes(),
    );
    let (gid, mid) = (&g.info.id, &m.id);
    let art = artifact_path(ctx.run_dir, gid, mid, job.repeat);
    let pred = predictions_path(ctx.run_dir, gid, mid, job.repeat);
    let stat = status_path(ctx.run_dir, gid, mid, job.repeat);
    let report = |outcome: &str, skipped| JobReport {
        group: gid.clone(),
        method: mid.clone(),
        repeat: job.repeat,
        outcome: outcome.to_string(),
        skipped,
    };
    if let Some(prev) = read_status(&stat) {
        if prev.key == key && prev.is_ok() && art.exists() {
            return Ok(report("ok", true));
        }
    }
    std::fs::create_dir_all(art.parent().expect("artifact has a parent"))?;
    for p in [&art, &pred, &stat] {
        let _ = std::fs::remove_file(p);
    }

    let inputs = MethodInputs { k_clusters, rank, seed };
    let mut status = JobStatus { key, repeat: job.repeat, seed, outcome: "ok".into(), detail: None, notes: vec![] };
    // A replicate can be unusable, e.g. a split whose training part holds a single class.
    let replicate = match g.plan.materialize(ds, job.repeat) {
        Ok(r) => r,
        Err(e) => {
            status.outcome = "error".into();
            status.detail = Some(format!("replicate: {e}"));
            write_json(&stat, &status)?;
            return Ok(report(&status.outcome, false));
        }
    };
    match (&m.builtin, &ctx.cfg.commands[job.method]) {
        (Some(builtin), _) => match methods::run(builtin, &replicate.train, replicate.test.as_ref(), inputs) {
            Ok(out) => {
                write_interpretation(&art, &out.interpretation)?;
                if let Some(p) = &out.predictions {
                    write_method_predictions(&pred, p)?;
                }
                status.notes = out.notes;
            }
            Err(e) => {
                status.outcome = "error".into();
                status.detail = Some(e.to_string());
            }
        },
        (None, Some(command)) => {
            let timeout = m.runner.as_ref().expect("runner method").timeout_seconds;
            let work = art.with_file_name(format!("{}.work", job.repeat));
            let result = run_external(command, &replicate, kind, inputs, timeout, &work)?;
            match (&result.status, &result.artifact) {
                (RunnerStatus::Ok, Some(a)) => {
                    write_interpretation(&art, a)?;
                    if let Some((ids, values)) = &result.predictions {
                        write_predictions(&pred, ids, values)?;
                    }
                }
                (s, _) => {
                    status.outcome = s.label().into();
                    status.detail = Some(serde_json::to_string(s)?);
                }
            }
        }
        _ => return Err(CliError::fatal(format!("method `{mid}` has no implementation"))),
    }
    if !status.is_ok() {
        log::warn!("{gid}/{mid}/{}: {} {}", job.repeat, status.outcome, status.detail.as_deref().unwrap_or(""));
    }
    write_json(&stat, &status)?;
    Ok(report(&status.outcome, false))
}

fn run_external(
    command: &[String],
    replicate: &stabx_core::perturb::Replicate,
    task: InterpretationKind,
    inputs: MethodInputs,
    timeout_seconds: u64,
    work: &Path,
) -> Result<runner::RunnerResult> {
    std::fs::create_dir_all(work)?;
    let work = std::path::absolute(work)?;
    let train_path = work.join("train.csv");
    replicate.train.save_csv(&train_path, TARGET_COLUMN)?;
    let test_path = match &replicate.test {
        Some(t) => {
            let p = work.join("test.csv");
            t.save_csv(&p, TARGET_COLUMN)?;
            Some(p)
        }
        None => None,
    };
    let supervised = replicate.train.task() != TaskKind::Unsupervised;
    let manifest = RunnerManifest {
        version: MANIFEST_VERSION,
        task,
        train_path,
        test_path: test_path.clone(),
        target_column: supervised.then(|| TARGET_COLUMN.to_string()),
        target_kind: supervised.then(|| replicate.train.task()),
        k_clusters: inputs.k_clusters,
        rank: inputs.rank,
        seed: inputs.seed,
        output_paths: OutputPaths {
            interpretation: work.join("interpretation.csv"),
            predictions: test_path.as_ref().map(|_| work.join("predictions.csv")),
        },
        timeout_seconds,
    };
    runner::invoke(command, &manifest, &work)
}

/// Serves one manifest with a built-in method; lets any built-in act as an
/// external runner.
pub fn run_builtin(method: &methods::BuiltinMethod, manifest_path: &Path) -> Result<()> {
    let m = RunnerManifest::load(manifest_path)?;
    if method.kind() != m.task {
        return Err(CliError::fatal(format!("method kind {:?} does not match manifest task {:?}", method.kind(), m.task)));
    }
    let opts = m.csv_options(None);
    let train = stabx_core::dataset::load_csv(&m.train_path, &opts)?;
    let test = m.test_path.as_ref().map(|p| stabx_core::dataset::load_csv(p, &opts)).transpose()?;
    let out = methods::run(method, &train, test.as_ref(), MethodInputs { k_clusters: m.k_clusters, rank: m.rank, seed: m.seed })?;
    write_interpretation(&m.output_paths.interpretation, &out.interpretation)?;
    if let (Some(path), Some(p)) = (&m.output_paths.predictions, &out.predictions) {
        artifacts::write_method_predictions(path, p)?;
    }
    Ok(())
}
