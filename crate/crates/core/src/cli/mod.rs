//! Command-line front end: `simulate`, `analyze`, `verify` and `compare`.

mod commands;
pub mod config;
mod output;

use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand};

pub use commands::{analyze, compare, simulate, verify, VerifyReport};
pub use config::{Experiment, ExperimentConfig};

use crate::analysis::CancelToken;

#[derive(Debug, Parser)]
#[command(name = "async-heat", version, about = "Asynchronous heat-equation solver as a stochastic switched system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synchronous reference and asynchronous ensemble.
    Simulate(CommonArgs),
    /// Certificates and analytic bounds from the worst-case mode.
    Analyze(CommonArgs),
    /// Enumerate modes and check their shared eigenstructure.
    Verify(CommonArgs),
    /// Empirical exceedance against the Markov estimate and the analytic bound.
    Compare(CommonArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ensemble worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Mode enumeration cap for `verify`.
    #[arg(long)]
    pub cap: Option<u64>,
    /// Abort certificate solves after this many seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Analyze(_) => "analyze",
            Command::Verify(_) => "verify",
            Command::Compare(_) => "compare",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a) | Command::Analyze(a) | Command::Verify(a) | Command::Compare(a) => a,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Numerical(#[from] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Verification(_) | CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Verification(_) => "verification",
            CliError::Io(_) => "io",
            CliError::Numerical(_) => "numerical",
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Runs one parsed command and returns a short human-readable summary.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let args = cli.command.args();
    let mut exp = Experiment::from_path(&args.config)?;
    if let Some(cap) = args.cap {
        if cap == 0 {
            return Err(CliError::Config("--cap must be positive".into()));
        }
        exp.mode_cap = u128::from(cap);
    }
    let out = || -> Result<PathBuf, CliError> {
        args.out
            .clone()
            .or_else(|| exp.output_dir.clone())
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set output_dir".into()))
    };
    let cancel = args.timeout.map(|secs| {
        let token = CancelToken::new();
        let t = token.clone();
        std::thread::spawn(move || {
            std::thread::sleep(Duration::from_secs(secs));
            t.cancel();
        });
        token
    });
    match &cli.command {
        Command::Simulate(_) => simulate(&exp, &out()?, args.workers),
        Command::Analyze(_) => analyze(&exp, &out()?, cancel).map(|c| {
            format!(
                "lambda_max(P_m) = {:.6e}, K = {:.6e}, k0 = {}",
                c.worst_case.lambda_max,
                c.k_const(),
                c.tail.k0
            )
        }),
        Command::Verify(_) => {
            let report = verify(&exp)?;
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Io(e.to_string()))?;
            if let Some(dir) = args.out.clone().or_else(|| exp.output_dir.clone()) {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("verify_report.json"), format!("{text}\n"))?;
            }
            if report.passed {
                Ok(report.summary())
            } else {
                Err(CliError::Verification(report.summary()))
            }
        }
        Command::Compare(_) => compare(&exp, &out()?, args.workers, cancel),
    }
}
