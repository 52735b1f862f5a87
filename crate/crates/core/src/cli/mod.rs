//! Command-line interface. Exit codes: 0 success, 1 I/O failure, 2 bad
//! configuration or flags, 3 estimator failure.

mod commands;
pub mod manifest;
pub mod render;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use commands::{
    cmd_equilibrium, cmd_estimate, cmd_replicate, cmd_simulate, cmd_validate, ReplicateSummary,
};
pub use manifest::{config_digest, sha256_hex, RunManifest};

use crate::data::{DataError, Regime};
use crate::rd::{ClusterBy, Kernel, RdError, RdWindow};
use crate::simulator::SimError;

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "CUTOFFLAB_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error("estimation failed: {0}")]
    Estimator(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Estimator(_) => 3,
        }
    }
}

impl From<RdError> for CliError {
    fn from(e: RdError) -> Self {
        CliError::Estimator(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(source) => CliError::Io {
                path: "config".into(),
                source,
            },
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Data-file errors: unreadable files are I/O failures, malformed content
/// is a configuration problem.
pub(crate) fn data_error(path: &Path, e: DataError) -> CliError {
    match e {
        DataError::Io(source) => CliError::io(path, source),
        other => CliError::Config(format!("{}: {other}", path.display())),
    }
}

#[derive(Debug, Parser)]
#[command(name = "cutofflab", version, about = "Reference-point effects at an elimination cutoff")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a multi-season dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Run one RD estimator on a dataset.
    Estimate(EstimateArgs),
    /// Run the falsification battery on a dataset.
    Validate(ValidateArgs),
    /// Simulate, estimate and validate end to end into a directory.
    Replicate(ReplicateArgs),
    /// Solve the two-player contest and optionally write value-function series.
    Equilibrium(EquilibriumArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Local,
    Continuity,
    Diffdisc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    #[arg(long, default_value_t = crate::rd::DEFAULT_CUTOFF)]
    pub cutoff: f64,
    #[arg(long, default_value_t = 10_000)]
    pub permutations: usize,
    #[arg(long, default_value_t = 20170)]
    pub seed: u64,
    /// Keep only rows of one regime.
    #[arg(long, value_parser = parse_regime)]
    pub regime: Option<Regime>,
    #[arg(long, value_parser = parse_cluster, default_value = "athlete")]
    pub cluster: ClusterBy,
    #[arg(long, value_parser = parse_kernel, default_value = "triangular")]
    pub kernel: Kernel,
    /// Write the JSON result here, with a run manifest alongside.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub outcome: String,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Window as `lower:upper`, e.g. `30:31`.
    #[arg(long, conflicts_with = "auto_window")]
    pub window: Option<String>,
    /// Pick the window by covariate balance.
    #[arg(long)]
    pub auto_window: bool,
    #[arg(long, default_value_t = 10)]
    pub max_half_width: u32,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Comma-separated covariates for continuity-based adjustment.
    #[arg(long)]
    pub covariates: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated windows `lower:upper`; default is the smallest and the
    /// balance-selected window.
    #[arg(long)]
    pub windows: Option<String>,
    #[arg(long, default_value = "advanced")]
    pub placebo_outcome: String,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub permutations: usize,
}

#[derive(Debug, Args)]
pub struct EquilibriumArgs {
    #[arg(long, default_value_t = 1.0)]
    pub prize: f64,
    #[arg(long, default_value_t = 1.0)]
    pub loss_penalty: f64,
    #[arg(long, default_value_t = 0.0)]
    pub win_bonus: f64,
    #[arg(long, default_value_t = 1)]
    pub salience: u8,
    /// Grid size for the best-response check.
    #[arg(long, default_value_t = 2001)]
    pub verify_grid: usize,
    /// Write value-function series (x, baseline, pos_expect, neg_expect).
    #[arg(long)]
    pub figure1: Option<PathBuf>,
    #[arg(long, default_value_t = 2.25)]
    pub baseline_loss_slope: f64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 81)]
    pub points: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    s.parse()
}

fn parse_cluster(s: &str) -> Result<ClusterBy, String> {
    s.parse()
}

fn parse_kernel(s: &str) -> Result<Kernel, String> {
    match s {
        "triangular" => Ok(Kernel::Triangular),
        "uniform" => Ok(Kernel::Uniform),
        _ => Err(format!("unknown kernel `{s}`")),
    }
}

/// `lower:upper` around `cutoff`.
pub fn parse_window(s: &str, cutoff: f64) -> Result<RdWindow, CliError> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("window `{s}` is not of the form lower:upper")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<i64>()
            .map_err(|_| CliError::Config(format!("window bound `{v}` is not an integer")))
    };
    RdWindow::new(parse(a)?, parse(b)?, cutoff).map_err(|e| CliError::Config(e.to_string()))
}

/// Seed from the environment override if set, otherwise `configured`.
pub fn resolve_seed(configured: u64) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(configured),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a.config.as_deref(), &a.out),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Replicate(a) => cmd_replicate(a.config.as_deref(), &a.out_dir, a.permutations).map(|s| {
            println!("{} artifacts written to {}", s.artifacts.len(), a.out_dir.display());
            println!("summary digest {}", s.summary_digest);
        }),
        Command::Equilibrium(a) => cmd_equilibrium(&a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
