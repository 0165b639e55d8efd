//! Command-line front end for `cavity-cs`.
//!
//! Experiments are defined by a JSON config (see [`config::parse_config`]);
//! flags only choose paths, the master seed, the trial count and verbosity.

pub mod commands;
pub mod config;
pub mod svg;

use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(cavity_cs::Error),
    #[error("{0}")]
    Io(cavity_cs::Error),
}

impl CliError {
    /// 2 for config errors, 3 for runtime failures, 4 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<cavity_cs::Error> for CliError {
    fn from(e: cavity_cs::Error) -> Self {
        match e.root() {
            cavity_cs::Error::Io { .. } | cavity_cs::Error::Parse { .. } => CliError::Io(e),
            cavity_cs::Error::Config(msg) => CliError::Config(msg.clone()),
            _ => CliError::Runtime(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cavity-cs",
    version,
    about = "Compressed sensing of a driven cavity field"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory [default: config `output_dir`, else `out`].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Trials per sweep cell, overriding the config.
    #[arg(long, global = true)]
    pub trials: Option<usize>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Drive, increments and amplitude sampled at every grid step.
    Simulate,
    /// Simulate, then take `M` flip-modulated measurements.
    Measure,
    /// Recover the amplitude from a `measure` output directory.
    Recover {
        /// Directory holding matrix.csv, schedules.csv and measurements.csv.
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
    },
    /// Full pipeline for one configuration, with plots.
    Figure2,
    /// Success probability over the configured (M, K) grid.
    Sweep,
    /// Print the resolved config and derived quantities.
    Info,
}
