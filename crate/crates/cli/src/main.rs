//! `illiq` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage/parse/io error, 2 cost certification
//! failure, 3 method or study does not fit the game, 4 solver error,
//! 5 solution file does not match the config, 6 study assertion failed.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "illiq",
    version,
    about = "Equilibrium trading in an illiquid market"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a config and certify its cost function.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the value-function system on a grid.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Fd)]
        method: Method,
        #[command(flatten)]
        grid: GridArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo of the equilibrium under a solved strategy.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scripted study.
    Sweep {
        #[arg(long)]
        study: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "N", value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long = "s", value_delimiter = ',')]
        s: Option<Vec<f64>>,
        #[command(flatten)]
        grid: GridArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Fd,
    Picard,
    Closed,
}

#[derive(Debug, Args)]
struct GridArg {
    /// Price nodes and time layers, `np,nt`.
    #[arg(long = "grid", value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected np,nt")?;
    let np = a.trim().parse().map_err(|e| format!("np: {e}"))?;
    let nt = b.trim().parse().map_err(|e| format!("nt: {e}"))?;
    Ok((np, nt))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("cost certification failed: {0}")]
    Certification(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("solution does not match config: {0}")]
    Solution(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Certification(_) => 2,
            CliError::Mismatch(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Solution(_) => 5,
            CliError::Assertion(_) => 6,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("io: {e}"))
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("ILLIQ_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Input(format!(
            "ILLIQ_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Check { config, out } => commands::check(&config, out.as_deref()),
        Command::Solve {
            config,
            method,
            grid,
            out,
        } => commands::solve(&config, method, grid.grid, &out),
        Command::Simulate {
            config,
            solution,
            paths,
            seed,
            out,
        } => commands::simulate(&config, &solution, paths, seed, &out),
        Command::Sweep {
            study,
            config,
            n,
            s,
            grid,
            out,
        } => commands::sweep(&study, config.as_deref(), n, s, grid.grid, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
