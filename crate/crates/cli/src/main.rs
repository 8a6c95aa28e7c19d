//! `infcast`: generate synthetic panels, validate inputs, run forecasting
//! experiments and evaluate them.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 data
//! error, 4 missing artifact.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{GenerateOverrides, RunOverrides};
use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "infcast", version, about = "Disaggregated inflation forecasting experiments")]
struct Cli {
    /// Log verbosity (-v info, -vv debug); RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic panel (panel.csv, weights.csv, meta.csv, truth.json).
    Generate {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Configuration file; only its [synthetic] section is read.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        months: Option<usize>,
        #[arg(long)]
        predictors: Option<usize>,
        #[arg(long)]
        factors: Option<usize>,
        /// Nonzero predictor effects per finest-level component.
        #[arg(long)]
        sparsity: Option<usize>,
    },
    /// Check the input files and the experiment plan.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the expanding-window experiment and write forecasts.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every available core.
        #[arg(long)]
        workers: Option<usize>,
        /// Run cells one after another in canonical order.
        #[arg(long)]
        deterministic: bool,
        /// Output directory, overriding the configured one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score stored forecasts against the benchmark; writes report.csv and selection.csv.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding forecasts.csv, overriding the configured one.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip the plain-text ratio tables.
        #[arg(long)]
        quiet: bool,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            out,
            config,
            seed,
            months,
            predictors,
            factors,
            sparsity,
        } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            let flags = GenerateOverrides {
                seed,
                months,
                predictors,
                factors,
                sparsity,
            };
            commands::cmd_generate(&cfg, &flags, &out)
        }
        Command::Validate { config } => commands::cmd_validate(&RunConfig::load(&config)?),
        Command::Run {
            config,
            seed,
            workers,
            deterministic,
            out,
        } => {
            let flags = RunOverrides {
                seed,
                workers,
                deterministic,
                out,
            };
            commands::cmd_run(&RunConfig::load(&config)?, &flags)
        }
        Command::Evaluate { config, out, quiet } => {
            commands::cmd_evaluate(&RunConfig::load(&config)?, out.as_deref(), quiet)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
