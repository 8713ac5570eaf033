//! `fairldp` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 failed check, 4 runtime
//! or data error.

mod commands;
mod config;
mod output;
mod theory;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Check(_) => 3,
            Self::Runtime(_) => 4,
        }
    }
}

impl From<fairldp::Error> for CliError {
    fn from(e: fairldp::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "fairldp", version, about = "Fair representations under local differential privacy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// key = value run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single seed (overrides `seeds`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps and frontiers.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Dataset cache directory (overrides `cache_dir`).
    #[arg(long, global = true, env = "FAIRLDP_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Download the adult files into the cache.
    FetchData,
    /// Check the privacy and achievability guarantees numerically.
    Verify,
    /// Solve one (β, ε) point on a discrete source.
    Solve,
    /// Trace the utility-leakage frontier over the β and ε grids.
    Frontier,
    /// Train an encoder and save a checkpoint.
    Train,
    /// Evaluate a saved checkpoint over the configured seeds.
    Evaluate,
    /// Train and evaluate every (mode, β, ε, seed) cell.
    Sweep,
    /// Merge sweep files into per-(β, ε) tradeoff tables.
    Report,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(dir) = &cli.cache_dir {
        cfg.cache_dir = Some(dir.clone());
    }
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cfg.out)?;
    match cli.command {
        Command::FetchData => commands::fetch_data(&cfg),
        Command::Verify => theory::verify(&cfg),
        Command::Solve => theory::solve(&cfg),
        Command::Frontier => theory::frontier(&cfg, cli.jobs),
        Command::Train => commands::train(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Sweep => commands::sweep(&cfg, cli.jobs),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fairldp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
