use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mixbma_cli::error::EXIT_CONFIG;
use mixbma_cli::{cmd_oracle, cmd_run, cmd_simulate, CliError, LoadedConfig};

/// Bayesian model selection and averaging from a single MCMC run.
///
/// Log verbosity follows the MIXBMA_LOG environment variable
/// (error, warn, info, debug, trace; default warn).
#[derive(Debug, Parser)]
#[command(name = "mixbma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the mixture posterior and write chain.csv, report.json and histograms.
    Run(Args),
    /// Compare estimates with closed forms and quadrature; writes oracle.json.
    Oracle(Args),
    /// Write a simulated dataset and truth.json.
    Simulate(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn dispatch(command: &Command) -> Result<PathBuf, CliError> {
    let (args, f): (&Args, fn(&LoadedConfig, Option<&Path>) -> Result<PathBuf, CliError>) = match command {
        Command::Run(a) => (a, cmd_run),
        Command::Oracle(a) => (a, cmd_oracle),
        Command::Simulate(a) => (a, cmd_simulate),
    };
    let cfg = LoadedConfig::load(&args.config)?;
    f(&cfg, args.output_dir.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MIXBMA_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match dispatch(&cli.command) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
