//! `emonet`: generate → clean → train → ablate → report.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emonet::weighting::Mode;

use crate::commands::CliError;

#[derive(Parser)]
#[command(
    name = "emonet",
    version,
    about = "Label-noise-aware emotion decoding from spike trains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "EMONET_OUT", default_value = "emonet-out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Clone)]
pub struct DataArg {
    /// Dataset directory (overrides the config).
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled dataset with optional label noise.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Score label quality and flag suspected label errors.
    Clean {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
    },
    /// Train the classifier in one weighting mode and evaluate it.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
    },
    /// Pruning-ratio sweep against random removal.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
    },
    /// Tabulate results documents as baseline / emo_p / emo_r.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directories holding `results*.json` (default: the output directory).
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: emonet::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common } => commands::generate(&common),
        Command::Clean { common, data } => commands::clean(&common, &data),
        Command::Train { common, data, mode } => commands::train(&common, &data, mode),
        Command::Ablate { common, data } => commands::ablate(&common, &data),
        Command::Report { common, inputs } => commands::report(&common, &inputs),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
