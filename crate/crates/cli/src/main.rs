//! `jkraim` command-line driver.
//!
//! Exit codes: 0 success, 2 bad input or configuration, 3 numerical failure,
//! 4 output could not be written.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "jkraim", version, about = "Jackknife ARAIM integrity monitoring")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the simulation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// No diagnostics on stderr; stdout carries only machine output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Jk,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundArg {
    Pgo,
    Gaussian,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Protection levels for one epoch, printed as JSON.
    Pl {
        /// Geometry file (TOML).
        geometry: PathBuf,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
        #[arg(long, value_enum)]
        bound: Option<BoundArg>,
        /// Also write a run manifest here.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Jackknife detector statistics for one epoch, printed as JSON.
    Detect {
        geometry: PathBuf,
        #[arg(long, value_enum)]
        bound: Option<BoundArg>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Worldwide availability simulation.
    Sim {
        /// Output directory (default: the configured one, else `.`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
        #[arg(long, value_enum)]
        bound: Option<BoundArg>,
    },
    /// Gaussian, BGMM and PGO overbounds of a sample, printed as JSON.
    Fit {
        /// CSV with one numeric column, optional header.
        samples: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = commands::run(&cli) {
        eprintln!("jkraim: {e}");
        std::process::exit(e.exit_code());
    }
}

pub fn info(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

pub type CliResult<T> = Result<T, CliError>;
