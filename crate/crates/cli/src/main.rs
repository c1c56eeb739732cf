//! `pskqkd`: key rates, sweeps, crossings, postselection borders and
//! simulations from the command line.
//!
//! Exit codes: 0 success, 2 usage or invalid input, 3 numerical failure,
//! 4 partial results.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{CrossingsArgs, KeyrateArgs, PsaArgs, SimulateArgs, SweepArgs};
use crate::config::ConfigFile;

#[derive(Debug, Parser)]
#[command(name = "pskqkd", version, about = "Key rates of N-letter PSK coherent-state QKD over a lossy channel")]
struct Cli {
    /// TOML file with default values; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Key rate at one parameter point.
    Keyrate(KeyrateArgs),
    /// Amplitude-optimized rates over a transmittance grid.
    Sweep(SweepArgs),
    /// Transmittances where optimized rate curves of two alphabets cross.
    Crossings(CrossingsArgs),
    /// Postselection border over the sectors.
    Psa(PsaArgs),
    /// Monte Carlo run of the protocol with analytic comparison.
    Simulate(SimulateArgs),
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::usage(format!("{}: {err}", path.display()))
    }

    pub fn partial(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<pskqkd::Error> for CliError {
    fn from(err: pskqkd::Error) -> Self {
        let code = match err {
            pskqkd::Error::Domain(_) => 2,
            pskqkd::Error::Bracket { .. } => 4,
            _ => 3,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Keyrate(args) => commands::keyrate(config.layer("keyrate", args)?, out),
        Command::Sweep(args) => commands::sweep(config.layer("sweep", args)?, out),
        Command::Crossings(args) => commands::crossings(config.layer("crossings", args)?, out),
        Command::Psa(args) => commands::psa(config.layer("psa", args)?, out),
        Command::Simulate(args) => commands::simulate(config.layer("simulate", args)?, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code)
        }
    }
}
