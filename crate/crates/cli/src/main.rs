//! `himpute`: multiple imputation for high-dimensional data.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.

mod analyze;
mod config;
mod impute;
mod opts;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, FileConfig};

#[derive(Debug, Parser)]
#[command(name = "himpute", version, about = "Multiple imputation with screening and dimension reduction")]
struct Cli {
    /// Flat JSON config; command-line flags override its keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for simulation replicates
    #[arg(long, global = true, env = "HIMPUTE_THREADS")]
    threads: Option<usize>,
    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Multiply impute the missing values of one column
    Impute(impute::ImputeArgs),
    /// Fit an analysis model to completed datasets and pool with Rubin's rules
    Analyze(analyze::AnalyzeArgs),
    /// Pool per-imputation estimates from a CSV table
    Pool(analyze::PoolArgs),
    /// Run the Monte Carlo comparison of imputation methods
    Simulate(simulate::SimulateArgs),
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let threads = cli.threads.or(file.threads);
    if threads == Some(0) {
        return Err(ConfigError(vec!["threads must be at least 1".into()]).into());
    }
    match &cli.command {
        Command::Impute(a) => impute::run(a, &file),
        Command::Analyze(a) => analyze::run_analyze(a, &file),
        Command::Pool(a) => analyze::run_pool(a, &file),
        Command::Simulate(a) => simulate::run(a, &file, threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                eprintln!("error: {c}");
                return ExitCode::from(2);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
