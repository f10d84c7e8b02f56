//! `taxsim` command-line entry point.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use taxsim_core::engine::ExportKind;

#[derive(Parser, Debug)]
#[command(name = "taxsim", version, about = "Agent-based tax policy simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation and write a run directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dotted `key=value` override, repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory. Defaults to `runs/<timestamp>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a GB2 to the `income` column of a CSV.
    FitGb2 {
        csv: PathBuf,
        #[arg(long, default_value = "gb2_fit")]
        out: PathBuf,
        /// Number of Q-Q points written.
        #[arg(long, default_value_t = 99)]
        quantiles: usize,
    },
    /// Optimize a schedule on the static economy a config describes.
    SolveSaez {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_enum, default_value_t = SolveMethod::Saez)]
        method: SolveMethod,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one tax year under a fixed schedule and report its welfare.
    Evaluate {
        /// JSON file with `thresholds` and `rates`.
        schedule: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the summary of an event log.
    Replay {
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write plot data from an event log as CSV.
    Export {
        log: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: ExportKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolveMethod {
    /// Bracket-wise Saez fixed point.
    Saez,
    /// Coordinate grid search over rate offsets.
    Grid,
    /// Exhaustive flat-rate search.
    Flat,
}

fn parse_kind(s: &str) -> Result<ExportKind, String> {
    s.parse()
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: missing or invalid config, unreadable arguments. Exit 2.
    Usage(anyhow::Error),
    /// Anything that went wrong after inputs were accepted. Exit 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        CliError::Usage(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        CliError::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate { config, seed, overrides, out } => commands::simulate(&config, seed, &overrides, out),
        Command::FitGb2 { csv, out, quantiles } => commands::fit_gb2(&csv, &out, quantiles),
        Command::SolveSaez { config, overrides, method, out } => {
            commands::solve_saez(config.as_deref(), &overrides, method, out.as_deref())
        }
        Command::Evaluate { schedule, config, overrides, out } => {
            commands::evaluate(&schedule, config.as_deref(), &overrides, out.as_deref())
        }
        Command::Replay { log, out } => commands::replay(&log, out.as_deref()),
        Command::Export { log, kind, out } => commands::export(&log, kind, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        // output piped into something like `head` that closed early
        Err(CliError::Runtime(e)) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<serde_json::Error>().and_then(|j| j.io_error_kind())
                == Some(std::io::ErrorKind::BrokenPipe)
    })
}
