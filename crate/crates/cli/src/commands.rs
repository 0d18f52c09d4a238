//! Subcommand bodies. Each returns the process exit code.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use stabx_core::dataset::{load_csv, CsvOptions};
use stabx_core::methods::BuiltinMethod;
use stabx_core::partmetrics::PartitionMetric;
use stabx_core::perturb::{make_noise, make_splits, make_subsamples, NoiseDistribution};
use stabx_core::rankmetrics::RankMetric;
use stabx_core::{InterpretationKind, TaskKind};

use crate::config::{self, MetricConfig};
use crate::error::{CliError, Result};
use crate::pipeline::{self, RunIndex};
use crate::runner::{self, OutputPaths, RunnerManifest, RunnerStatus, MANIFEST_VERSION};
use crate::{report, score};

/// Parses a snake_case enum name through its serde representation.
pub fn parse_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Accepts short names (`ao`, `fm`) as well as full ones.
pub fn parse_rank_metric(s: &str) -> std::result::Result<RankMetric, String> {
    RankMetric::ALL.into_iter().find(|m| m.name() == s).map_or_else(|| parse_name(s), Ok)
}

pub fn parse_partition_metric(s: &str) -> std::result::Result<PartitionMetric, String> {
    PartitionMetric::ALL.into_iter().find(|m| m.name() == s).map_or_else(|| parse_name(s), Ok)
}

pub fn pipeline(config_path: &Path, workers: Option<usize>) -> Result<i32> {
    let cfg = config::load_config(config_path)?;
    let summary = pipeline::run(&cfg, workers)?;
    let failed = summary.failed();
    println!(
        "{} jobs, {} reused, {} failed; results in {}",
        summary.jobs.len(),
        summary.skipped(),
        failed,
        summary.run_dir.display()
    );
    for j in summary.jobs.iter().filter(|j| j.outcome != "ok") {
        println!("  {}/{}/{}: {}", j.group, j.method, j.repeat, j.outcome);
    }
    Ok(summary.exit_code())
}

#[derive(Clone, Debug)]
pub struct PerturbArgs {
    pub data: PathBuf,
    pub target: Option<String>,
    pub task: TaskKind,
    pub kind: String,
    pub ratio: f64,
    pub repeats: usize,
    pub seed: u64,
    pub sigma: f64,
    pub distribution: NoiseDistribution,
    pub out: PathBuf,
}

/// Writes a perturbation plan for one dataset.
pub fn perturb(a: &PerturbArgs) -> Result<i32> {
    let ds = load_csv(&a.data, &CsvOptions::new(a.target.as_deref(), a.task))?;
    let plan = match a.kind.as_str() {
        "split" => make_splits(&ds, a.ratio, a.repeats, a.seed)?,
        "subsample" => make_subsamples(&ds, a.ratio, a.repeats, a.seed)?,
        "noise" => make_noise(&ds, a.distribution, a.sigma, a.repeats, a.seed)?,
        other => return Err(CliError::config(format!("unknown perturbation kind `{other}`; use split, subsample or noise"))),
    };
    std::fs::write(&a.out, serde_json::to_string_pretty(&plan)? + "\n")?;
    println!("{} repeats, fingerprint {:016x}, written to {}", plan.len(), plan.fingerprint(), a.out.display());
    Ok(0)
}

#[derive(Clone, Debug, Default)]
pub struct MetricOverrides {
    pub k: Option<usize>,
    pub rank_metric: Option<RankMetric>,
    pub partition_metric: Option<PartitionMetric>,
    pub kendall_p: Option<f64>,
}

/// Rescores a run directory; metric settings come from `run.json` unless
/// overridden.
pub fn score(run_dir: &Path, o: &MetricOverrides) -> Result<i32> {
    let mut m: MetricConfig = RunIndex::load(run_dir)?.map(|i| i.metrics).unwrap_or_default();
    if let Some(k) = o.k {
        m.k = k;
    }
    if let Some(r) = o.rank_metric {
        m.rank_metric = r;
    }
    if let Some(p) = o.partition_metric {
        m.partition_metric = p;
    }
    if let Some(p) = o.kendall_p {
        m.kendall_p = p;
    }
    let s = score::score_run(run_dir, &m)?;
    let missing = s.within.iter().filter(|w| w.cell.is_none()).count();
    println!("{} cells scored, {missing} missing; tables in {}", s.within.len(), run_dir.join("scores").display());
    Ok(0)
}

pub fn report(run_dir: &Path) -> Result<i32> {
    let r = report::build_report(run_dir)?;
    println!("{} report files in {}", r.files.len(), run_dir.join("report").display());
    Ok(0)
}

/// 50 samples in two well-separated groups with a linear target.
pub fn toy_csv(n: usize) -> String {
    let mut s = String::from("id,x0,x1,x2,x3,target\n");
    for i in 0..n {
        let g = (i % 2) as f64 * 6.0;
        let t = i as f64;
        let x = [g + (t * 0.7).sin(), g + (t * 1.3).cos(), (t * 0.37).sin() * 2.0, (t * 2.1).cos()];
        let y = 2.0 * x[0] - x[1] + 0.1 * (t * 0.9).sin();
        s.push_str(&format!("s{i},{:?},{:?},{:?},{:?},{:?}\n", x[0], x[1], x[2], x[3], y));
    }
    s
}

/// Drives `command` through one manifest per task on a toy dataset.
pub fn validate_runner(command: &[String], tasks: &[InterpretationKind], timeout_seconds: u64, keep: Option<&Path>) -> Result<i32> {
    let tmp;
    let dir = match keep {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            std::path::absolute(d)?
        }
        None => {
            tmp = std::env::temp_dir().join(format!("stabx-validate-{}", std::process::id()));
            std::fs::create_dir_all(&tmp)?;
            tmp.clone()
        }
    };
    let base = std::env::current_dir()?;
    let program = runner::resolve_program(&command[0], &base)
        .ok_or_else(|| CliError::config(format!("runner program `{}` not found or not executable", command[0])))?;
    let mut argv = command.to_vec();
    argv[0] = program.to_string_lossy().into_owned();

    let train = dir.join("train.csv");
    let test = dir.join("test.csv");
    std::fs::write(&train, toy_csv(50))?;
    // The test part holds the ten rows after the training rows.
    let all = toy_csv(60);
    let mut lines = all.lines();
    let header = lines.next().unwrap_or_default();
    let rest: Vec<&str> = lines.skip(50).collect();
    std::fs::write(&test, format!("{header}\n{}\n", rest.join("\n")))?;

    let mut failures = 0;
    for &task in tasks {
        let name = crate::artifacts::kind_name(task);
        let work = dir.join(name);
        let fi = task == InterpretationKind::FeatureImportance;
        let m = RunnerManifest {
            version: MANIFEST_VERSION,
            task,
            train_path: train.clone(),
            test_path: fi.then(|| test.clone()),
            target_column: fi.then(|| "target".into()),
            target_kind: fi.then_some(TaskKind::Regression),
            k_clusters: (task == InterpretationKind::Clustering).then_some(2),
            rank: (task == InterpretationKind::DimensionReduction).then_some(2),
            seed: 1,
            output_paths: OutputPaths {
                interpretation: work.join("interpretation.csv"),
                predictions: fi.then(|| work.join("predictions.csv")),
            },
            timeout_seconds,
        };
        let r = runner::invoke(&argv, &m, &work)?;
        let detail = match &r.status {
            RunnerStatus::Ok => String::new(),
            RunnerStatus::Timeout => format!(" after {timeout_seconds}s"),
            RunnerStatus::Crash { exit_code, signal } => format!(" (exit {exit_code:?}, signal {signal:?}; see {})", work.join("stderr.log").display()),
            RunnerStatus::InvalidOutput { reason } => format!(": {reason}"),
        };
        if r.status != RunnerStatus::Ok {
            failures += 1;
        }
        println!("{name}: {}{detail}", r.status.label());
    }
    // Logs of failed tasks stay on disk for inspection.
    if keep.is_none() && failures == 0 {
        let _ = std::fs::remove_dir_all(&dir);
    }
    Ok(if failures == 0 { 0 } else { 2 })
}

pub fn run_builtin(method: &str, manifest: &Path) -> Result<i32> {
    let m = BuiltinMethod::parse(method).map_err(|e| CliError::config(e.to_string()))?;
    pipeline::run_builtin(&m, manifest)?;
    Ok(0)
}
