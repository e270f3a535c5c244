//! Command-line runner: synthetic data, estimator fitting, constrained
//! search, scaling, the few-shot benchmark and reports. Every run writes
//! `manifest.json` next to its outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use eanas::par::Execution;

use crate::commands::RunContext;
use crate::config::{pick, FileConfig};
pub use crate::error::{CliError, CliResult};
pub use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "eanas", version, about = "Energy-aware detector architecture search")]
pub struct Cli {
    /// Root seed; every subsystem seed is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for candidate scoring and benchmark cells.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Fail instead of creating a missing output directory.
    #[arg(long, global = true)]
    pub no_create: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic energy dataset, its ground truth and an accuracy proxy.
    Synth(SynthArgs),
    /// Fit a two-stage or joint energy estimator for one target device.
    Fit(FitArgs),
    /// Budget-constrained stage-wise search.
    Search(SearchArgs),
    /// Derive nano/small/medium variants of an architecture.
    Scale(ScaleArgs),
    /// Few-shot adaptation benchmark over a range of target sample counts.
    Bench(BenchArgs),
    /// Tradeoff and search-space reports.
    #[command(subcommand)]
    Report(ReportCommand),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Fit(_) => "fit",
            Command::Search(_) => "search",
            Command::Scale(_) => "scale",
            Command::Bench(_) => "bench",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// constant_offset, device_scale or nonlinear_mix.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub archs: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Dataset directory (registry.json, archs.json, energy.csv).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub n_target: Option<usize>,
    /// two_stage or joint.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub source_devices: Option<Vec<String>>,
    /// Also fit the joint model and report its metrics.
    #[arg(long)]
    pub baseline: bool,
    /// Target normalization range from the full `pool` or only the `few_shot` samples.
    #[arg(long)]
    pub normalization: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Accuracy proxy network JSON.
    #[arg(long)]
    pub proxy: Option<PathBuf>,
    /// Estimator bundle JSON.
    #[arg(long)]
    pub estimator: Option<PathBuf>,
    #[arg(long)]
    pub device: Option<String>,
    /// Normalized energy budget; `inf` disables it.
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Starting architecture JSON; the all-midpoint design by default.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScaleArgs {
    /// Base architecture JSON.
    #[arg(long)]
    pub arch: Option<PathBuf>,
    /// nano, small or medium.
    #[arg(long, conflicts_with = "all")]
    pub label: Option<String>,
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub n_step: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub source_devices: Option<Vec<String>>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum ReportCommand {
    /// Flag Pareto-dominated rows of a `label,accuracy,energy` CSV.
    Pareto {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Energy distribution and candidate-pool summaries of the search space.
    Space {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        proxy: Option<PathBuf>,
        /// Score energy with this bundle instead of the analytic cost.
        #[arg(long, requires = "device")]
        estimator: Option<PathBuf>,
        #[arg(long)]
        device: Option<String>,
        #[arg(long)]
        baseline_arch: Option<PathBuf>,
    },
}

/// Merges flags with the config file into a run context.
pub fn context(cli: &Cli) -> CliResult<RunContext> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let workers = cli.workers.or(file.workers);
    if workers == Some(0) {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    let execution = if workers == Some(1) || !Execution::parallel_available() {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    Ok(RunContext {
        root_seed: pick(cli.seed, file.seed, 0),
        out_dir: pick(cli.out_dir.clone(), file.out_dir.clone(), PathBuf::from("eanas-out")),
        create_out_dir: !cli.no_create,
        execution,
        workers,
        file,
        config_path: cli.config.clone(),
    })
}

fn dispatch(ctx: &RunContext, command: &Command) -> CliResult<RunManifest> {
    match command {
        Command::Synth(a) => commands::cmd_synth(ctx, a),
        Command::Fit(a) => commands::cmd_fit(ctx, a),
        Command::Search(a) => commands::cmd_search(ctx, a),
        Command::Scale(a) => commands::cmd_scale(ctx, a),
        Command::Bench(a) => commands::cmd_bench(ctx, a),
        Command::Report(r) => commands::cmd_report(ctx, r),
    }
}

/// Runs a parsed command, inside a dedicated thread pool when `--workers` is set.
pub fn run(cli: &Cli) -> CliResult<RunManifest> {
    let ctx = context(cli)?;
    #[cfg(feature = "parallel")]
    if let Some(n) = ctx.workers {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage(format!("cannot start {n} workers: {e}")))?;
        return pool.install(|| dispatch(&ctx, &cli.command));
    }
    dispatch(&ctx, &cli.command)
}

/// Parses `args` (including the program name) and runs them.
pub fn run_args<I, T>(args: I) -> CliResult<RunManifest>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::usage(e.to_string()))?;
    run(&cli)
}
