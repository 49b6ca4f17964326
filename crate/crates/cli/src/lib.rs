//! Subcommands of the `actioncodec` binary.

pub mod commands;
pub mod config;
pub mod plot;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// A failed command and the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    /// Unusable or incomplete configuration: exit code 2.
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<actioncodec::Error> for CliError {
    fn from(e: actioncodec::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "actioncodec",
    about = "Train, evaluate and compare action tokenizers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory written by `synth`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-embodiment dataset.
    Synth(Common),
    /// Train a single-level codec.
    Train(Common),
    /// Add residual levels to a trained codec.
    Posttrain(Common),
    /// Token diagnostics for one codec.
    Eval(Common),
    /// Budget, overlap and reconstruction across all tokenizers.
    Compare(Common),
    /// Train a toy policy on codec tokens and inject random tokens.
    Perturb(Common),
    /// Decode one embodiment's tokens as another embodiment.
    Transfer(Common),
    /// SVG plots from the CSVs in `--out`.
    Report(Common),
}

/// Caps worker threads from `ACTIONCODEC_THREADS` unless the thread pool is
/// already configured.
pub fn apply_thread_cap() {
    if let Ok(v) = std::env::var("ACTIONCODEC_THREADS") {
        if v.parse::<usize>().is_ok_and(|n| n > 0)
            && std::env::var_os("RAYON_NUM_THREADS").is_none()
        {
            std::env::set_var("RAYON_NUM_THREADS", v);
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(c) => commands::synth(&c),
        Command::Train(c) => commands::train(&c),
        Command::Posttrain(c) => commands::posttrain(&c),
        Command::Eval(c) => commands::eval(&c),
        Command::Compare(c) => commands::compare(&c),
        Command::Perturb(c) => commands::perturb(&c),
        Command::Transfer(c) => commands::transfer(&c),
        Command::Report(c) => commands::report(&c),
    }
}
