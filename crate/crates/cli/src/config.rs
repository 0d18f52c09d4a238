//! Pipeline configuration: JSON, or TOML with the same schema.
//!
//! Validation is exhaustive and happens before any computation. Every
//! dataset is loaded, every runner command is resolved and every problem
//! is reported in one error.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};
use stabx_core::dataset::{load_csv, CsvOptions};
use stabx_core::methods::BuiltinMethod;
use stabx_core::partmetrics::PartitionMetric;
use stabx_core::perturb::{sigma_sweep, NoiseDistribution};
use stabx_core::rankmetrics::RankMetric;
use stabx_core::stability::MseNormalization;
use stabx_core::{InterpretationKind, TabularDataset, TaskKind, Target};

use crate::error::{CliError, Result};
use crate::runner::{resolve_program, DEFAULT_TIMEOUT_SECONDS};

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Run directory; relative paths resolve against the config file.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    /// Center and scale every feature column before perturbation.
    #[serde(default = "yes")]
    pub standardize: bool,
    pub datasets: Vec<DatasetConfig>,
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub metrics: MetricConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub id: String,
    pub path: PathBuf,
    pub task: TaskKind,
    /// Response column of a supervised dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Ground-truth class column of an unsupervised dataset; never a feature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    /// Number of clusters; defaults to the number of truth classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_clusters: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ignore: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub id: String,
    #[serde(default, deserialize_with = "builtin_spec", skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner: Option<RunnerConfig>,
}

/// Accepts `"pca"` as well as `{"method": "pca", ...}`.
fn builtin_spec<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<BuiltinMethod>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Spec {
        Name(String),
        Full(serde_json::Value),
    }
    let text = match Spec::deserialize(d)? {
        Spec::Name(n) => n,
        Spec::Full(v) => v.to_string(),
    };
    BuiltinMethod::parse(&text).map(Some).map_err(serde::de::Error::custom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunnerConfig {
    /// argv prefix; the manifest path is appended.
    pub command: Vec<String>,
    pub task: InterpretationKind,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECONDS
}

impl MethodConfig {
    pub fn kind(&self) -> Option<InterpretationKind> {
        match (&self.builtin, &self.runner) {
            (Some(b), None) => Some(b.kind()),
            (None, Some(r)) => Some(r.task),
            _ => None,
        }
    }

    /// Identity of the computation, for skip keys.
    pub fn fingerprint(&self) -> String {
        match (&self.builtin, &self.runner) {
            (Some(b), _) => b.canonical(),
            (_, Some(r)) => serde_json::to_string(r).expect("runner config serializes"),
            _ => String::new(),
        }
    }
}

fn repeats() -> usize {
    100
}
fn ratio() -> f64 {
    0.7
}
fn dr_ranks() -> Vec<usize> {
    vec![2, 5, 10]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(default = "repeats")]
    pub repeats: usize,
    /// Training share of each train/test split (supervised datasets).
    #[serde(default = "ratio")]
    pub split_ratio: f64,
    /// Retained share of each subsample (unsupervised datasets).
    #[serde(default = "ratio")]
    pub subsample_fraction: f64,
    /// Additive feature noise sweep (unsupervised datasets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    /// Embedding ranks; the first one feeds the headline tables.
    #[serde(default = "dr_ranks")]
    pub dr_ranks: Vec<usize>,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self { repeats: repeats(), split_ratio: ratio(), subsample_fraction: ratio(), noise: None, dr_ranks: dr_ranks() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "normal")]
    pub distribution: NoiseDistribution,
    /// Explicit noise scales.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigmas: Vec<f64>,
    /// Evenly spaced scales `[lo, hi, steps]`, appended to `sigmas`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<(f64, f64, usize)>,
    /// Repeats per scale; defaults to the perturbation repeats.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
}

fn normal() -> NoiseDistribution {
    NoiseDistribution::Normal
}

impl NoiseConfig {
    pub fn scales(&self) -> std::result::Result<Vec<f64>, String> {
        let mut out = self.sigmas.clone();
        if let Some((lo, hi, steps)) = self.sweep {
            out.extend(sigma_sweep(lo, hi, steps).map_err(|e| e.to_string())?);
        }
        Ok(out)
    }
}

fn k_default() -> usize {
    10
}
fn k_sweep_max() -> usize {
    30
}
fn nn_grid() -> usize {
    50
}
fn nn_cap() -> usize {
    500
}
fn ao() -> RankMetric {
    RankMetric::AverageOverlap
}
fn ari() -> PartitionMetric {
    PartitionMetric::Ari
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    #[serde(default = "ao")]
    pub rank_metric: RankMetric,
    #[serde(default = "k_default")]
    pub k: usize,
    /// Upper end of the K sweep (1..=k_sweep_max).
    #[serde(default = "k_sweep_max")]
    pub k_sweep_max: usize,
    #[serde(default)]
    pub kendall_p: f64,
    #[serde(default = "ari")]
    pub partition_metric: PartitionMetric,
    #[serde(default = "nn_grid")]
    pub nn_grid: usize,
    #[serde(default = "nn_cap")]
    pub nn_sample_cap: usize,
    #[serde(default)]
    pub mse_normalization: MseNormalization,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            rank_metric: ao(),
            k: k_default(),
            k_sweep_max: k_sweep_max(),
            kendall_p: 0.0,
            partition_metric: ari(),
            nn_grid: nn_grid(),
            nn_sample_cap: nn_cap(),
            mse_normalization: MseNormalization::default(),
        }
    }
}

impl MetricConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.k == 0 || self.k_sweep_max == 0 {
            errs.push("metrics.k and metrics.k_sweep_max must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.kendall_p) {
            errs.push(format!("metrics.kendall_p must lie in [0, 1], got {}", self.kendall_p));
        }
        if self.nn_grid < 2 || self.nn_sample_cap < 2 {
            errs.push("metrics.nn_grid and metrics.nn_sample_cap must be >= 2".into());
        }
        errs
    }
}

/// A loaded dataset with its resolved clustering K.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub config: DatasetConfig,
    pub data: TabularDataset,
    /// Ground-truth classes of an unsupervised dataset.
    pub truth: Option<(Vec<usize>, Vec<String>)>,
    pub k_clusters: Option<usize>,
}

/// A validated configuration with absolute paths and loaded datasets.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub config: PipelineConfig,
    pub output_dir: PathBuf,
    pub datasets: Vec<LoadedDataset>,
    /// Runner argv with the program resolved, indexed like `config.methods`.
    pub commands: Vec<Option<Vec<String>>>,
    /// SHA-256 of the configuration, excluding output location and worker count.
    pub config_hash: String,
}

pub fn parse_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn load_config(path: &Path) -> Result<ResolvedConfig> {
    let config = parse_config(path)?;
    let base = std::path::absolute(path)?.parent().map(Path::to_path_buf).unwrap_or_default();
    resolve(config, &base)
}

fn safe_id(id: &str) -> bool {
    !id.is_empty() && !id.starts_with('.') && id.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
}

/// Validates `config`, resolving relative paths against `base`.
pub fn resolve(config: PipelineConfig, base: &Path) -> Result<ResolvedConfig> {
    let mut errs: Vec<String> = Vec::new();
    let p = &config.perturbation;
    if config.datasets.is_empty() {
        errs.push("no datasets configured".into());
    }
    if config.methods.is_empty() {
        errs.push("no methods configured".into());
    }
    if config.workers == 0 {
        errs.push("workers must be >= 1".into());
    }
    if p.repeats < 2 {
        errs.push(format!("perturbation.repeats must be >= 2, got {}", p.repeats));
    }
    for (name, v) in [("split_ratio", p.split_ratio), ("subsample_fraction", p.subsample_fraction)] {
        if !(v > 0.0 && v < 1.0) {
            errs.push(format!("perturbation.{name} must lie in (0, 1), got {v}"));
        }
    }
    if p.dr_ranks.is_empty() || p.dr_ranks.contains(&0) {
        errs.push("perturbation.dr_ranks must be a non-empty list of ranks >= 1".into());
    }
    if let Some(noise) = &p.noise {
        match noise.scales() {
            Ok(s) if s.is_empty() => errs.push("perturbation.noise lists no scales".into()),
            Ok(s) => {
                if let Some(bad) = s.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    errs.push(format!("perturbation.noise scale {bad} is not a finite value >= 0"));
                }
            }
            Err(e) => errs.push(format!("perturbation.noise: {e}")),
        }
        if noise.repeats.is_some_and(|r| r < 2) {
            errs.push("perturbation.noise.repeats must be >= 2".into());
        }
    }
    errs.extend(config.metrics.problems());

    let mut seen = HashSet::new();
    for id in config.datasets.iter().map(|d| &d.id).chain(config.methods.iter().map(|m| &m.id)) {
        if !safe_id(id) {
            errs.push(format!("id `{id}` must be non-empty and use only letters, digits, `_`, `-` or `.`"));
        }
        if !seen.insert(id.clone()) {
            errs.push(format!("duplicate id `{id}`"));
        }
    }

    let mut commands = Vec::new();
    let mut kinds = HashSet::new();
    for m in &config.methods {
        let mut command = None;
        match (&m.builtin, &m.runner) {
            (Some(b), None) => {
                if let Err(e) = b.validate() {
                    errs.push(format!("method `{}`: {e}", m.id));
                }
            }
            (None, Some(r)) => {
                if r.timeout_seconds == 0 {
                    errs.push(format!("method `{}`: timeout_seconds must be >= 1", m.id));
                }
                match r.command.first() {
                    None => errs.push(format!("method `{}`: empty runner command", m.id)),
                    Some(prog) => match resolve_program(prog, base) {
                        Some(full) => {
                            let mut argv = r.command.clone();
                            if Path::new(prog).components().count() > 1 {
                                argv[0] = full.to_string_lossy().into_owned();
                            }
                            command = Some(argv);
                        }
                        None => errs.push(format!("method `{}`: runner program `{prog}` not found or not executable", m.id)),
                    },
                }
            }
            _ => errs.push(format!("method `{}` needs exactly one of `builtin` or `runner`", m.id)),
        }
        kinds.extend(m.kind());
        commands.push(command);
    }

    let mut datasets = Vec::new();
    for d in &config.datasets {
        match load_dataset(d, base, &kinds) {
            Ok(ld) => datasets.push(ld),
            Err(mut e) => errs.append(&mut e),
        }
    }

    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let config_hash = config_hash(&config);
    let output_dir = std::path::absolute(base.join(&config.output_dir))?;
    Ok(ResolvedConfig { config, output_dir, datasets, commands, config_hash })
}

fn load_dataset(d: &DatasetConfig, base: &Path, kinds: &HashSet<InterpretationKind>) -> std::result::Result<LoadedDataset, Vec<String>> {
    let ctx = |msg: String| vec![format!("dataset `{}`: {msg}", d.id)];
    let supervised = d.task != TaskKind::Unsupervised;
    if supervised && d.target.is_none() {
        return Err(ctx("supervised datasets need a `target` column".into()));
    }
    if !supervised && d.target.is_some() {
        return Err(ctx("unsupervised datasets take ground truth via `truth`, not `target`".into()));
    }
    if supervised && d.truth.is_some() {
        return Err(ctx("`truth` applies to unsupervised datasets only".into()));
    }
    let path = base.join(&d.path);
    let mut ignore = d.ignore.clone();
    ignore.extend(d.truth.iter().cloned());
    let opts = CsvOptions { target: d.target.clone(), task: Some(d.task), ignore };
    let data = load_csv(&path, &opts).map_err(|e| ctx(format!("{}: {e}", path.display())))?;
    let truth = match &d.truth {
        Some(col) => {
            let opts = CsvOptions { target: Some(col.clone()), task: Some(TaskKind::Classification), ignore: d.ignore.clone() };
            let t = load_csv(&path, &opts)
                .map_err(|e| ctx(format!("truth column `{col}`: {e}")))?;
            match t.target() {
                Some(Target::Class { labels, classes }) => Some((labels.clone(), classes.clone())),
                _ => None,
            }
        }
        None => None,
    };
    let k_clusters = d.k_clusters.or(truth.as_ref().map(|t| t.1.len()));
    if !supervised && kinds.contains(&InterpretationKind::Clustering) {
        match k_clusters {
            None => return Err(ctx("clustering methods need `k_clusters` or a `truth` column".into())),
            Some(k) if k < 2 || k >= data.n_samples() => {
                return Err(ctx(format!("k_clusters must lie in 2..{}, got {k}", data.n_samples())))
            }
            _ => {}
        }
    }
    Ok(LoadedDataset { config: d.clone(), data, truth, k_clusters })
}

fn config_hash(config: &PipelineConfig) -> String {
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    c.workers = 0;
    hex(&Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
