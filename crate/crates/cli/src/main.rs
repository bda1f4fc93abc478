//! `fjup`: CSV emitters for the allocation analyses and stream experiments.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fjup_core::FjupError;

#[derive(Parser)]
#[command(name = "fjup", version, about = "Chunk allocation and Fork-Join stream upload experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the configuration (default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Mean latency of every allocation.
    IntermittentSweep(Common),
    /// Allocation against replication as the data grows.
    SyncCost(Common),
    /// Latency and regret of every (N, r)-allocation.
    NrTrellis(Common),
    /// Effective decay rate of every allocation.
    DecaySweep(Common),
    /// Replicated stream simulation of every configured scheduler.
    StreamExperiment(Common),
    /// Simulates a training trace under proportional allocation.
    GenTraining(Common),
    /// Fits one modulated service model per path from a trace.
    TrainMm {
        #[command(flatten)]
        common: Common,
        /// CSV with columns path,chunk_time,packets.
        #[arg(long)]
        trace: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<FjupError>() {
        Some(
            FjupError::Domain { .. }
            | FjupError::GridTooSmall { .. }
            | FjupError::Divergent(_)
            | FjupError::Unstable { .. }
            | FjupError::Overloaded
            | FjupError::NoSignChange { .. },
        ) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::IntermittentSweep(c) => commands::intermittent_sweep(&c),
        Command::SyncCost(c) => commands::sync_cost(&c),
        Command::NrTrellis(c) => commands::nr_trellis(&c),
        Command::DecaySweep(c) => commands::decay_sweep(&c),
        Command::StreamExperiment(c) => commands::stream_experiment(&c),
        Command::GenTraining(c) => commands::gen_training(&c),
        Command::TrainMm { common, trace } => commands::train_mm(&common, &trace),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
