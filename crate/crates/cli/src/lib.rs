//! Command-line harness: capacity sweeps, memory-capacity curves, MatNTM
//! training/evaluation and gradient checks, writing CSV, SVG and JSON.

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENT: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    NonConvergent(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::NonConvergent(_) => EXIT_NONCONVERGENT,
            CliError::Check(_) => EXIT_CHECK,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<matcap_core::Error> for CliError {
    fn from(e: matcap_core::Error) -> Self {
        use matcap_core::Error as E;
        match e {
            E::NonConvergent { .. } | E::Overflow { .. } | E::SingularCovariance(_) | E::NotPositiveDefinite => {
                CliError::NonConvergent(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<matcap_ntm::AdError> for CliError {
    fn from(e: matcap_ntm::AdError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<matcap_ntm::checkpoint::CheckpointError> for CliError {
    fn from(e: matcap_ntm::checkpoint::CheckpointError) -> Self {
        use matcap_ntm::checkpoint::CheckpointError as C;
        match e {
            C::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "matcap", version, about = "Fisher memory capacity of matrix recurrent systems and a matrix NTM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fisher memory curves of random matrix systems and vector twins.
    Fmc(FmcArgs),
    /// Total and relative capacity over a range of sizes.
    CapacitySweep(SweepArgs),
    /// Memory curves with the one-slot queue memory.
    MemFmc(MemArgs),
    /// Train a MatNTM or matrix RNN on copy or associative recall.
    Train(TrainArgs),
    /// Cost versus sequence length (copy) or item length (recall).
    Eval(EvalArgs),
    /// Backprop versus finite differences on a small model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct FmcArgs {
    /// Matrix side; 1 selects the fixed scalar system u = v = 0.5, w = 1.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = matcap_core::sweep::DEFAULT_RADIUS)]
    pub radius: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub kmax: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated sizes, e.g. 2,4,8.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, conflicts_with = "general")]
    pub normal: bool,
    #[arg(long)]
    pub general: bool,
    #[arg(long, default_value_t = matcap_core::sweep::DEFAULT_RADIUS)]
    pub radius: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MemArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = matcap_core::memory::DEFAULT_M_MAX)]
    pub m_max: usize,
    #[arg(long, default_value_t = 100)]
    pub kmax: usize,
    #[arg(long, default_value_t = matcap_core::sweep::DEFAULT_RADIUS)]
    pub radius: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Flat key = value (or JSON) file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Suppress progress lines on stderr.
    #[arg(long)]
    pub quiet: bool,
    /// Continue from a training checkpoint; `--iterations` sets the new total.
    #[arg(long, conflicts_with_all = ["task", "model", "config", "seed"])]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `l=1..40` for copy, `n=1..6` for recall, or a comma list.
    #[arg(long, default_value = "l=1..40")]
    pub sweep: String,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fmc(a) => commands::fmc(&a),
        Command::CapacitySweep(a) => commands::capacity_sweep(&a),
        Command::MemFmc(a) => commands::mem_fmc(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    }
}
