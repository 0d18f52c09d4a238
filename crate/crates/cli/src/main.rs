use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stabx::commands::{self, parse_name, parse_partition_metric, parse_rank_metric, MetricOverrides, PerturbArgs};
use stabx::runner::DEFAULT_TIMEOUT_SECONDS;
use stabx_core::partmetrics::PartitionMetric;
use stabx_core::perturb::NoiseDistribution;
use stabx_core::rankmetrics::RankMetric;
use stabx_core::{InterpretationKind, TaskKind};

/// Stability of feature rankings, clusterings and embeddings under data perturbation.
#[derive(Parser)]
#[command(name = "stabx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run perturbation, methods, scoring and reporting from a config file.
    Pipeline {
        config: PathBuf,
        /// Overrides `workers` from the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a perturbation plan for one dataset.
    Perturb {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value = "unsupervised", value_parser = parse_name::<TaskKind>)]
        task: TaskKind,
        /// split, subsample or noise.
        #[arg(long, default_value = "split")]
        kind: String,
        /// Training fraction for splits, kept fraction for subsamples.
        #[arg(long, default_value_t = 0.7)]
        ratio: f64,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value = "normal", value_parser = parse_name::<NoiseDistribution>)]
        distribution: NoiseDistribution,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute stability scores from the artifacts of a run directory.
    Score {
        run_dir: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_parser = parse_rank_metric)]
        rank_metric: Option<RankMetric>,
        #[arg(long, value_parser = parse_partition_metric)]
        partition_metric: Option<PartitionMetric>,
        #[arg(long)]
        kendall_p: Option<f64>,
    },
    /// Build plot-ready tables from the scores of a run directory.
    Report { run_dir: PathBuf },
    /// Check that an external runner honours the manifest protocol.
    ValidateRunner {
        #[arg(long, value_delimiter = ',', value_parser = parse_name::<InterpretationKind>,
              default_value = "feature_importance,clustering,dimension_reduction")]
        tasks: Vec<InterpretationKind>,
        #[arg(long, default_value_t = DEFAULT_TIMEOUT_SECONDS)]
        timeout: u64,
        /// Keep inputs, outputs and logs in this directory.
        #[arg(long)]
        keep: Option<PathBuf>,
        #[arg(required = true, last = true)]
        command: Vec<String>,
    },
    /// Serve a runner manifest with a built-in method.
    #[command(hide = true)]
    RunBuiltin {
        #[arg(long)]
        method: String,
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Pipeline { config, workers } => commands::pipeline(&config, workers),
        Command::Perturb { data, target, task, kind, ratio, repeats, seed, sigma, distribution, out } => {
            commands::perturb(&PerturbArgs { data, target, task, kind, ratio, repeats, seed, sigma, distribution, out })
        }
        Command::Score { run_dir, k, rank_metric, partition_metric, kendall_p } => {
            commands::score(&run_dir, &MetricOverrides { k, rank_metric, partition_metric, kendall_p })
        }
        Command::Report { run_dir } => commands::report(&run_dir),
        Command::ValidateRunner { tasks, timeout, keep, command } => {
            commands::validate_runner(&command, &tasks, timeout, keep.as_deref())
        }
        Command::RunBuiltin { method, manifest } => commands::run_builtin(&method, &manifest),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
