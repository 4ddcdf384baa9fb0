//! `fracdiff`: config-driven front end for the fracdiff library.
//!
//! Exit codes: 0 success, 2 config error, 3 numeric or convergence error,
//! 4 precondition error.  Errors are also written to stderr as JSON.

mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fracdiff::Error;
use serde::Serialize;

use crate::commands::Output;
use crate::config::Loaded;
use crate::report::{to_json, ErrorBody, ErrorReport, Report};

#[derive(Parser)]
#[command(name = "fracdiff", version, about = "Coupled time-fractional diffusion systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Problem and experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports and CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for noise and restarts; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Format of stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run the Picard, L1 and/or contour solvers.
    Solve,
    /// Fit the long-time decay slope.
    Decay,
    /// Recover the fractional orders from a single-point trace.
    Invert,
    /// Check the coupling conditions and the maximum principle.
    Validate,
    /// Evaluate the Mittag-Leffler function.
    MlfEval,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Decay => "decay",
            Command::Invert => "invert",
            Command::Validate => "validate",
            Command::MlfEval => "mlf-eval",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

const DEFAULT_SEED: u64 = 1;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidParameter(_) | Error::Io(_) | Error::Csv(_) => 2,
        Error::Precondition(_) => 4,
        Error::Overflow { .. } | Error::NonConvergence { .. } | Error::Numeric(_) | Error::InsufficientData(_) => 3,
    }
}

fn write_files(dir: &Path, files: &[(String, Vec<u8>)]) -> fracdiff::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn finish<T: Serialize>(cli: &Cli, cfg: &Loaded, seed: u64, out: Output<T>) -> fracdiff::Result<String> {
    let name = cli.command.name();
    let json = to_json(&Report {
        command: name,
        version: fracdiff::VERSION,
        config_hash: &cfg.hash,
        seed,
        result: out.result,
    });
    if let Some(dir) = &cli.out {
        let mut files = out.files;
        files.push((format!("{name}.json"), json.clone().into_bytes()));
        write_files(dir, &files)?;
    }
    Ok(match cli.format {
        Format::Json => json,
        Format::Csv => out.table,
    })
}

fn run(cli: &Cli) -> fracdiff::Result<String> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs {n}: {e}")))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let cfg = Loaded::load(path)?;
    let seed = cli.seed.or(cfg.experiment.seed).unwrap_or(DEFAULT_SEED);
    match cli.command {
        Command::Solve => finish(cli, &cfg, seed, commands::solve(&cfg)?),
        Command::Decay => finish(cli, &cfg, seed, commands::decay(&cfg)?),
        Command::Invert => finish(cli, &cfg, seed, commands::invert(&cfg, seed)?),
        Command::Validate => finish(cli, &cfg, seed, commands::validate(&cfg, seed)?),
        Command::MlfEval => finish(cli, &cfg, seed, commands::mlf_eval(&cfg)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = exit_code(&e);
            let (iterations, increments) = match &e {
                Error::NonConvergence { iterations, history, .. } => (Some(*iterations), Some(history.as_slice())),
                _ => (None, None),
            };
            eprint!(
                "{}",
                to_json(&ErrorReport {
                    error: ErrorBody {
                        kind: e.kind(),
                        message: e.to_string(),
                        exit_code: code as i32,
                        iterations,
                        increments,
                    },
                })
            );
            ExitCode::from(code)
        }
    }
}
