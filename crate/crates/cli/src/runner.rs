//! External method protocol.
//!
//! The harness writes a JSON manifest, launches the runner with the manifest
//! path as its only argument and waits up to the manifest's timeout. The
//! runner writes its interpretation (and predictions, when asked) to the
//! paths named in the manifest; the harness validates them like any
//! built-in result.
//!
//! Each runner gets its own process group. On timeout the whole group is
//! killed, and after any exit stray group members are killed and reaped, so
//! no process outlives its repeat.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use stabx_core::dataset::{load_csv, CsvOptions};
use stabx_core::{Interpretation, InterpretationKind, SampleId, TaskKind};

use crate::artifacts::{self, Expected};
use crate::error::{CliError, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT_SECONDS: u64 = 43_200;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub interpretation: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunnerManifest {
    pub version: u32,
    pub task: InterpretationKind,
    pub train_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_column: Option<String>,
    /// `regression` or `classification`; tells runners how to read the target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_kind: Option<TaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_clusters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    pub seed: u64,
    pub output_paths: OutputPaths,
    pub timeout_seconds: u64,
}

impl RunnerManifest {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut errs = Vec::new();
        if self.version != MANIFEST_VERSION {
            errs.push(format!("unsupported manifest version {}", self.version));
        }
        let mut paths = vec![("train_path", &self.train_path), ("output_paths.interpretation", &self.output_paths.interpretation)];
        if let Some(p) = &self.test_path {
            paths.push(("test_path", p));
        }
        if let Some(p) = &self.output_paths.predictions {
            paths.push(("output_paths.predictions", p));
        }
        for (name, p) in paths {
            if !p.is_absolute() {
                errs.push(format!("{name} must be absolute, got {}", p.display()));
            }
        }
        match self.task {
            InterpretationKind::FeatureImportance => {
                if self.target_column.is_none() {
                    errs.push("feature_importance requires target_column".into());
                }
                if matches!(self.target_kind, Some(TaskKind::Unsupervised)) {
                    errs.push("target_kind must be regression or classification".into());
                }
            }
            InterpretationKind::Clustering if self.k_clusters.is_none_or(|k| k == 0) => {
                errs.push("clustering requires k_clusters >= 1".into());
            }
            InterpretationKind::DimensionReduction if self.rank.is_none_or(|r| r == 0) => {
                errs.push("dimension_reduction requires rank >= 1".into());
            }
            _ => {}
        }
        if self.test_path.is_some() != self.output_paths.predictions.is_some() {
            errs.push("test_path and output_paths.predictions go together".into());
        }
        if self.timeout_seconds == 0 {
            errs.push("timeout_seconds must be >= 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs.join("; "))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: RunnerManifest = serde_json::from_str(&text)?;
        m.validate().map_err(|e| CliError::fatal(format!("{}: {e}", path.display())))?;
        Ok(m)
    }

    pub fn csv_options(&self, task: Option<TaskKind>) -> CsvOptions {
        let task = match (&self.target_column, task.or(self.target_kind)) {
            (Some(_), Some(t)) => t,
            (Some(_), None) => TaskKind::Regression,
            (None, _) => TaskKind::Unsupervised,
        };
        CsvOptions::new(self.target_column.as_deref(), task)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunnerStatus {
    Ok,
    Timeout,
    Crash { exit_code: Option<i32>, signal: Option<i32> },
    InvalidOutput { reason: String },
}

impl RunnerStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunnerStatus::Ok => "ok",
            RunnerStatus::Timeout => "timeout",
            RunnerStatus::Crash { .. } => "crash",
            RunnerStatus::InvalidOutput { .. } => "invalid_output",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunnerResult {
    pub status: RunnerStatus,
    pub wall_time: Duration,
    /// Present iff the status is ok.
    pub artifact: Option<Interpretation>,
    /// Test-set predictions as canonical strings, when requested.
    pub predictions: Option<(Vec<SampleId>, Vec<String>)>,
    /// Process group of the runner; no member survives `invoke`.
    pub process_group: i32,
}

impl RunnerResult {
    fn failed(status: RunnerStatus, wall_time: Duration, process_group: i32) -> Self {
        Self { status, wall_time, artifact: None, predictions: None, process_group }
    }
}

/// Runs `command manifest_path` inside `work_dir` and validates its outputs.
///
/// Child failures are encoded in the status. Errors are reserved for the
/// harness side: an invalid manifest, unreadable inputs or a command that
/// cannot be spawned.
pub fn invoke(command: &[String], manifest: &RunnerManifest, work_dir: &Path) -> Result<RunnerResult> {
    let program = command.first().ok_or_else(|| CliError::config("empty runner command"))?;
    manifest.validate().map_err(CliError::fatal)?;
    std::fs::create_dir_all(work_dir)?;
    let manifest_path = std::path::absolute(work_dir.join("manifest.json"))?;
    std::fs::write(&manifest_path, serde_json::to_string_pretty(manifest)? + "\n")?;
    for p in std::iter::once(&manifest.output_paths.interpretation).chain(manifest.output_paths.predictions.as_ref()) {
        match std::fs::remove_file(p) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
            _ => {}
        }
    }
    let expected = expectations(manifest)?;

    become_subreaper();
    let mut cmd = Command::new(program);
    cmd.args(&command[1..])
        .arg(&manifest_path)
        .current_dir(work_dir)
        .stdin(Stdio::null())
        .stdout(File::create(work_dir.join("stdout.log"))?)
        .stderr(File::create(work_dir.join("stderr.log"))?);
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| CliError::fatal(format!("cannot launch `{program}`: {e}")))?;
    let pgid = child.id() as i32;
    let limit = Duration::from_secs(manifest.timeout_seconds);
    let mut nap = Duration::from_millis(1);
    let exit = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        let elapsed = start.elapsed();
        if elapsed >= limit {
            kill_group(pgid);
            child.wait()?;
            break None;
        }
        std::thread::sleep(nap.min(limit - elapsed));
        nap = (nap * 2).min(Duration::from_millis(25));
    };
    kill_group(pgid);
    reap_group(pgid);
    let wall_time = start.elapsed();

    let Some(exit) = exit else {
        return Ok(RunnerResult::failed(RunnerStatus::Timeout, wall_time, pgid));
    };
    if !exit.success() {
        #[cfg(unix)]
        let signal = std::os::unix::process::ExitStatusExt::signal(&exit);
        #[cfg(not(unix))]
        let signal = None;
        return Ok(RunnerResult::failed(RunnerStatus::Crash { exit_code: exit.code(), signal }, wall_time, pgid));
    }
    let invalid = |reason: String| RunnerResult::failed(RunnerStatus::InvalidOutput { reason }, wall_time, pgid);
    let artifact = match artifacts::parse_interpretation(&manifest.output_paths.interpretation, manifest.task, &expected.interpretation) {
        Ok(a) => a,
        Err(e) => return Ok(invalid(e.0)),
    };
    let predictions = match (&manifest.output_paths.predictions, &expected.test_ids) {
        (Some(path), Some(ids)) => match artifacts::read_predictions(path, Some(ids), expected.real_target) {
            Ok(p) => Some(p),
            Err(e) => return Ok(invalid(format!("predictions: {e}"))),
        },
        _ => None,
    };
    Ok(RunnerResult { status: RunnerStatus::Ok, wall_time, artifact: Some(artifact), predictions, process_group: pgid })
}

struct Expectations {
    interpretation: Expected,
    test_ids: Option<Vec<SampleId>>,
    real_target: bool,
}

fn expectations(m: &RunnerManifest) -> Result<Expectations> {
    // Only shapes and ids matter here, so the target is dropped unparsed.
    let opts = CsvOptions {
        target: None,
        task: Some(TaskKind::Unsupervised),
        ignore: m.target_column.iter().cloned().collect(),
    };
    let train = load_csv(&m.train_path, &opts)?;
    let test_ids = match &m.test_path {
        Some(p) => Some(load_csv(p, &opts)?.samples().to_vec()),
        None => None,
    };
    let interpretation = match m.task {
        InterpretationKind::FeatureImportance => Expected { n_features: Some(train.n_features()), ..Default::default() },
        InterpretationKind::Clustering => {
            Expected { sample_ids: Some(train.samples().to_vec()), k_clusters: m.k_clusters, ..Default::default() }
        }
        InterpretationKind::DimensionReduction => {
            Expected { sample_ids: Some(train.samples().to_vec()), rank: m.rank, ..Default::default() }
        }
    };
    Ok(Expectations { interpretation, test_ids, real_target: m.target_kind == Some(TaskKind::Regression) })
}

#[cfg(unix)]
fn kill_group(pgid: i32) {
    // SAFETY: kill has no memory-safety preconditions; ESRCH is expected
    // once the group is gone.
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

#[cfg(not(unix))]
fn kill_group(_pgid: i32) {}

/// Reaps group members that were reparented to us. Returns once no child of
/// ours remains in the group (bounded by a short grace period).
#[cfg(unix)]
fn reap_group(pgid: i32) {
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        let mut status = 0;
        // SAFETY: status points to a live local.
        let r = unsafe { libc::waitpid(-pgid, &mut status, libc::WNOHANG) };
        if r > 0 {
            continue;
        }
        if r < 0 || Instant::now() >= deadline {
            return;
        }
        kill_group(pgid);
        std::thread::sleep(Duration::from_millis(1));
    }
}

#[cfg(not(unix))]
fn reap_group(_pgid: i32) {}

/// Orphaned grandchildren of a runner are reparented to this process rather
/// than to init, so `reap_group` can collect them.
fn become_subreaper() {
    #[cfg(target_os = "linux")]
    {
        static ONCE: std::sync::Once = std::sync::Once::new();
        ONCE.call_once(|| {
            // SAFETY: PR_SET_CHILD_SUBREAPER takes a plain integer flag.
            unsafe {
                libc::prctl(libc::PR_SET_CHILD_SUBREAPER, 1, 0, 0, 0);
            }
        });
    }
}

/// Whether any process is left in the group.
#[cfg(unix)]
pub fn group_alive(pgid: i32) -> bool {
    // SAFETY: signal 0 only checks for existence.
    unsafe { libc::kill(-pgid, 0) == 0 }
}

#[cfg(not(unix))]
pub fn group_alive(_pgid: i32) -> bool {
    false
}

/// Resolves a program name the way the OS would when spawning it.
pub fn resolve_program(program: &str, base: &Path) -> Option<PathBuf> {
    let p = Path::new(program);
    if p.components().count() > 1 || p.is_absolute() {
        let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        return is_executable(&full).then_some(full);
    }
    std::env::var_os("PATH")
        .iter()
        .flat_map(std::env::split_paths)
        .map(|dir| dir.join(program))
        .find(|c| is_executable(c))
}

fn is_executable(p: &Path) -> bool {
    let Ok(meta) = std::fs::metadata(p) else {
        return false;
    };
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        meta.is_file() && meta.permissions().mode() & 0o111 != 0
    }
    #[cfg(not(unix))]
    {
        meta.is_file()
    }
}
