mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use commands::Run;
use config::{ConfigError, RunConfig};
use lr_towers::delone::DeloneError;
use lr_towers::deviation::DeviationError;
use lr_towers::markov::MarkovError;
use lr_towers::towers::TowerError;
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

#[derive(Parser)]
#[command(
    name = "lrtower",
    version,
    about = "Tower systems and patch deviations for repetitive Delone sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Treat every failed check as an error.
    #[arg(long, global = true)]
    strict: bool,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a point set.
    Generate,
    /// Build, serialize and verify a tower from the stored point set.
    Tower,
    /// Re-verify the stored tower.
    Verify,
    /// Transverse measures, mixing coefficients and sampling checks.
    Markov,
    /// Patch-count deviation sweep.
    Deviation,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("resource error: {0}")]
    Resource(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DeloneError> for CliError {
    fn from(e: DeloneError) -> Self {
        match e {
            DeloneError::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Resource(e.to_string()),
        }
    }
}

impl From<TowerError> for CliError {
    fn from(e: TowerError) -> Self {
        match e {
            TowerError::InvalidParams(_) | TowerError::PeriodicInput => {
                CliError::Config(e.to_string())
            }
            TowerError::HypothesisViolation { .. } | TowerError::CongruenceFailure { .. } => {
                CliError::Verification(e.to_string())
            }
            TowerError::Delone(d) => d.into(),
            _ => CliError::Resource(e.to_string()),
        }
    }
}

impl From<MarkovError> for CliError {
    fn from(e: MarkovError) -> Self {
        match e {
            MarkovError::NonPositiveMatrix(_) | MarkovError::ZeroMeasureClass { .. } => {
                CliError::Verification(e.to_string())
            }
            MarkovError::IndexOutOfRange { .. } => CliError::Config(e.to_string()),
            _ => CliError::Resource(e.to_string()),
        }
    }
}

impl From<DeviationError> for CliError {
    fn from(e: DeviationError) -> Self {
        match e {
            DeviationError::InvalidInput(_) => CliError::Config(e.to_string()),
            DeviationError::Delone(d) => d.into(),
            _ => CliError::Resource(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.strict |= cli.strict;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Resource(format!("{}: {e}", cli.out.display())))?;
    let run = Run {
        hash: cfg.hash(),
        cfg,
        out: cli.out,
    };
    match cli.command {
        Command::Generate => commands::cmd_generate(&run),
        Command::Tower => commands::cmd_tower(&run),
        Command::Verify => commands::cmd_verify(&run),
        Command::Markov => commands::cmd_markov(&run),
        Command::Deviation => commands::cmd_deviation(&run),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lrtower: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
