//! Command-line entry point: `run` executes a config-driven computation and
//! writes artifacts; `plot` derives gnuplot-ready data files from them.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use blochband::config::RunConfig;
use blochband::runner;
use blochband::Error;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Environment variable consulted for the worker count when --threads is
/// absent.
const THREADS_ENV: &str = "BLOCHBAND_THREADS";

#[derive(Parser)]
#[command(name = "blochband", version, about = "Band-structure solver for periodic elliptic operators with high contrast")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task described by a config file and write artifacts.
    Run {
        /// Path to the run configuration.
        config: PathBuf,
        /// Output directory (overrides the config's [output] directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker thread count (default: BLOCHBAND_THREADS or all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Print progress to stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Derive plot data files from an artifact directory.
    Plot {
        /// Directory containing bands.csv (and optionally gaps.json,
        /// ids.csv).
        dir: PathBuf,
    },
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidSpec(_) | Error::InvalidShape(_) => 2,
        _ => 3,
    }
}

fn configure_threads(requested: Option<usize>) -> Result<(), String> {
    let n = match requested {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| format!("{THREADS_ENV} = '{v}' is not a thread count"))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err("thread count must be >= 1".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, threads, verbose } => {
            if let Err(msg) = configure_threads(threads) {
                eprintln!("error: {msg}");
                return ExitCode::from(2);
            }
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output_directory));
            match runner::run(&cfg, &out_dir, verbose) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit_code_for(&e))
                }
            }
        }
        Command::Plot { dir } => match runner::emit_plot_data(&dir) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code_for(&e))
            }
        },
    }
}
