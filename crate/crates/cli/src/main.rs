//! `envlang` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 malformed arguments or
//! configuration, 3 unknown experiment, 4 invalid `γ`/`h`, 5 unwritable
//! output directory.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use envlang::exec::Execution;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    UnknownExperiment(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("output directory: {0}")]
    OutputDir(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::UnknownExperiment(_) => 3,
            CliError::InvalidParameter(_) => 4,
            CliError::OutputDir(_) => 5,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "envlang", version, about = "Envelope-smoothed Langevin experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured experiment and write its CSV bundle.
    Run(Common),
    /// Parse and check a configuration without running it.
    Validate(Common),
    /// Print Wasserstein and contraction bounds over a grid of γ.
    Theory(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, env = "ENVLANG_WORKERS")]
    workers: Option<usize>,
    /// Use the admissible step-size rule instead of the configured h.
    #[arg(long)]
    safe_steps: bool,
}

impl Common {
    fn load(&self) -> Result<config::Config, CliError> {
        let mut cfg = config::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.safe_steps |= self.safe_steps;
        Ok(cfg)
    }
}

fn execution(workers: Option<usize>) -> Result<Execution, CliError> {
    match workers {
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::default()),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.load()?;
            let exec = execution(cfg.workers)?;
            commands::run(&cfg, exec)
        }
        Command::Validate(c) => {
            let cfg = c.load()?;
            if cfg.experiment.is_some() {
                cfg.experiment()?;
            }
            if cfg.theory.is_some() {
                cfg.theory_section()?;
            }
            if cfg.experiment.is_none() && cfg.theory.is_none() {
                return Err(CliError::Config("nothing to run: set `experiment` or add a [theory] section".into()));
            }
            println!("{}: ok", c.config.display());
            Ok(())
        }
        Command::Theory(c) => {
            let cfg = c.load()?;
            commands::theory(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
