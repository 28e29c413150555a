//! Command-line front end: argument parsing, network files, CSV reports and
//! exit codes.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{Preset, Seed};
use config::{load_network, ModelKind};
use error::{CliError, CliResult};

/// Environment variable supplying the seed when `--seed` is absent.
pub const SEED_ENV: &str = "TDVMM_SEED";

#[derive(Debug, Parser)]
#[command(name = "tdvmm", version, about = "Compile, simulate and estimate time-domain vector-by-matrix multipliers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the programmed source currents of every layer.
    Compile {
        network: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run input rows through the network and report outputs and crossings.
    Simulate {
        network: PathBuf,
        /// Matrix CSV with one input vector per row.
        #[arg(long)]
        inputs: PathBuf,
        /// Overrides the model of the network file.
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo effective precision of each layer and the whole network.
    Precision {
        network: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Latency, energy and area over VMM sizes and precisions.
    Sweep {
        /// Comma-separated sizes; defaults to 10, 50, 100, ..., 1000.
        #[arg(long = "n", value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long = "p", value_delimiter = ',', default_value = "6")]
        precisions: Vec<u32>,
        #[arg(long, value_enum, default_value = "conservative")]
        preset: Preset,
        #[arg(long, value_enum, default_value = "on")]
        io: Toggle,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

/// Seed from the flag, else from [`SEED_ENV`], else zero.
pub fn resolve_seed(flag: Option<u64>) -> CliResult<Seed> {
    if let Some(value) = flag {
        return Ok(Seed { value, source: "flag" });
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .map(|value| Seed { value, source: SEED_ENV })
            .map_err(|_| CliError::schema(format!("{SEED_ENV}={text} is not an unsigned integer"))),
        Err(_) => Ok(Seed { value: 0, source: "default" }),
    }
}

/// Runs a parsed command, returning the rendered report and its destination.
pub fn execute(command: &Command) -> CliResult<(String, Option<PathBuf>)> {
    let (report, out) = match command {
        Command::Compile { network, out } => {
            let net = load_network(network)?;
            (commands::compile(&net, &network.display().to_string())?, out)
        }
        Command::Simulate { network, inputs, model, seed, out } => {
            let net = load_network(network)?;
            let matrix = csvio::read_matrix(inputs)?;
            let kind = model.unwrap_or(net.file.model.kind);
            (commands::simulate(&net, &network.display().to_string(), &matrix, kind, resolve_seed(*seed)?)?, out)
        }
        Command::Precision { network, trials, model, seed, out } => {
            let net = load_network(network)?;
            let kind = model.unwrap_or(net.file.model.kind);
            (commands::precision(&net, &network.display().to_string(), kind, *trials, resolve_seed(*seed)?)?, out)
        }
        Command::Sweep { sizes, precisions, preset, io, out } => {
            let sizes = sizes.clone().unwrap_or_else(commands::default_sizes);
            (commands::sweep(&sizes, precisions, *preset, *io == Toggle::On)?, out)
        }
    };
    Ok((report.render(), out.clone()))
}
