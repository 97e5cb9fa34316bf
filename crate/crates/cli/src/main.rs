//! `mixflow` command-line driver.
//!
//! Each subcommand reads one JSON config and writes CSV/JSON results into the
//! output directory. Exit codes: 0 success, 1 I/O error, 2 config error,
//! 3 numerical error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::RunContext;
use error::{CliError, CliResult};
use mixflow::exec::Execution;

#[derive(Debug, Parser)]
#[command(
    name = "mixflow",
    version,
    about = "Transport of QMC points and sparse grids to mixture distributions"
)]
struct Cli {
    /// Override the seed(s) in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Omit the timestamp line from CSV files and write wall times as zero.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a Halton, sparse-grid or MC point set.
    Pointset { config: PathBuf },
    /// Transport a point set to a mixture.
    Transport { config: PathBuf },
    /// Run a convergence study and fit rates.
    Converge { config: PathBuf },
    /// Compare DM-LAIS and TQMC-LAIS.
    Lais { config: PathBuf },
}

fn execution(threads: Option<usize>) -> CliResult<Execution> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        Some(_n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(_n)
                .build_global()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = RunContext {
        out: cli.out,
        seed: cli.seed,
        reproducible: cli.reproducible,
        exec: execution(cli.threads)?,
    };
    match &cli.command {
        Command::Pointset { config } => commands::cmd_pointset(config, &ctx),
        Command::Transport { config } => commands::cmd_transport(config, &ctx),
        Command::Converge { config } => commands::cmd_converge(config, &ctx),
        Command::Lais { config } => commands::cmd_lais(config, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mixflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
