//! Command-line front end: parses arguments, resolves the run
//! configuration, and dispatches to the library.

pub mod args;
mod commands;
pub mod config;
pub mod heads;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::Path;

use clap::error::ErrorKind;
use clap::{ArgMatches, CommandFactory, FromArgMatches};

use crate::args::Cli;
use crate::config::{load_config, RunConfig};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "SLAB_THREADS";

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input data (exit 1).
    Validation(String),
    /// Environment failures and failed self-checks (exit 2).
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<slab_core::Error> for CliError {
    fn from(e: slab_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Validation(format!(
            "{THREADS_ENV} must be a positive integer, got `{raw}`"
        ))
    })?;
    // a pool built earlier in this process already fixes the size
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Runs one command and returns the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = Cli::command()
        .try_get_matches_from(argv)
        .and_then(|m| Ok((command_path(&m), Cli::from_arg_matches(&m)?)));
    let (name, cli) = match parsed {
        Ok(p) => p,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&name, cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Subcommand names as typed, e.g. `rank train`.
fn command_path(m: &ArgMatches) -> String {
    let mut parts = Vec::new();
    let mut cur = m;
    while let Some((name, sub)) = cur.subcommand() {
        parts.push(name);
        cur = sub;
    }
    parts.join(" ")
}

fn execute(name: &str, cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let file = match &cli.global.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    let config = file.with_overrides(cli.global.seed, cli.global.preset)?;
    commands::dispatch(name, &cli.command, &config, cli.global.out.clone())
}
