use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use lorafl::exec::Execution;
use lorafl::orchestrator::LinkMode;
use lorafl::scenario::{self, Preset, ScenarioConfig};

#[derive(Parser)]
#[command(name = "lorafl", version, about = "Federated learning over LoRa networks: discrete-event simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write metrics.csv and metrics.jsonl.
    Run {
        config: PathBuf,
        /// Parameter sweep applied on top of the file.
        #[arg(long)]
        preset: Option<Preset>,
        /// Master seed, overriding the file.
        #[arg(long)]
        seed: Option<u64>,
        /// Link model: sim, analytical or ideal.
        #[arg(long)]
        link_mode: Option<LinkMode>,
        /// Output directory, overriding the file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run everything on one thread.
        #[arg(long)]
        sequential: bool,
    },
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config, preset, seed, link_mode, out, sequential } => {
            let mut cfg = ScenarioConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(mode) = link_mode {
                cfg.schedule.link_mode = mode;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let records = scenario::run_scenario(&cfg, preset, &out, exec).context("running scenario")?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
