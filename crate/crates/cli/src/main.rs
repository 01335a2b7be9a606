//! `relaylab`: analysis, optimization, simulation and parameter sweeps for a
//! random-access network with a full-duplex relay.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::AnalyzeOptions;
use crate::config::SweepSpec;
use crate::error::CliError;

const THREADS_VAR: &str = "RELAYLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "relaylab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form queue and throughput metrics as JSON.
    Analyze {
        #[command(flatten)]
        io: Io,
        /// Exit 0 even when the relay queue is unstable.
        #[arg(long)]
        allow_unstable: bool,
        /// Write the fully expanded scenario to PATH.
        #[arg(long, value_name = "PATH")]
        dump_config: Option<PathBuf>,
        /// Slots for the simulation fallback on large non-identical networks.
        #[arg(long, default_value_t = 1_000_000)]
        slots: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// One CSV row per value of a swept parameter.
    Sweep {
        #[command(flatten)]
        io: Io,
        /// Optimizer grid resolution, overriding the sweep file.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Throughput-maximizing receiver and transmitter activation.
    Optimize {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value_t = relaylab::optimizer::DEFAULT_GRID)]
        grid: usize,
        /// Refine the best grid point with a continuous search.
        #[arg(long)]
        refine: bool,
    },
    /// Slot-level simulation statistics as JSON.
    Simulate {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        run: Run,
        #[arg(long, default_value_t = relaylab::sim::DEFAULT_WARMUP)]
        warmup: u64,
    },
    /// Compares simulation against the closed forms; exit 4 if any |z| > 3.
    Validate {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        run: Run,
    },
}

#[derive(Debug, Args)]
struct Io {
    /// Scenario file (sweep file for `sweep`); defaults to the reference
    /// deployment.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Run {
    #[arg(long, default_value_t = 1_000_000)]
    slots: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Analyze {
            io,
            allow_unstable,
            dump_config,
            slots,
            seed,
        } => {
            let scenario = commands::load_scenario(io.config.as_deref())?;
            let opts = AnalyzeOptions {
                allow_unstable,
                dump_config: dump_config.as_deref(),
                slots,
                seed,
            };
            commands::analyze_cmd(&scenario, io.out.as_deref(), &opts)
        }
        Command::Sweep { io, grid } => {
            let path = io
                .config
                .ok_or_else(|| CliError::Config("sweep needs --config PATH".into()))?;
            let spec = SweepSpec::load(&path)?;
            commands::sweep_cmd(&spec, io.out.as_deref(), grid)
        }
        Command::Optimize { io, grid, refine } => {
            let scenario = commands::load_scenario(io.config.as_deref())?;
            commands::optimize_cmd(&scenario, io.out.as_deref(), grid, refine)
        }
        Command::Simulate { io, run, warmup } => {
            let scenario = commands::load_scenario(io.config.as_deref())?;
            commands::simulate_cmd(&scenario, io.out.as_deref(), run.slots, run.seed, warmup)
        }
        Command::Validate { io, run } => {
            let scenario = commands::load_scenario(io.config.as_deref())?;
            commands::validate_cmd(&scenario, io.out.as_deref(), run.slots, run.seed)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
