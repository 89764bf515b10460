mod compare;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use broker_assign::Policy;
use clap::{Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "broker-assign", version, about = "Capacity-aware broker assignment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world into a directory.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the dense pair utility table.
        #[arg(long)]
        utilities: bool,
    },
    /// Run policies on a world and write metrics, ledgers and a manifest.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// World directory from `generate`; generated from the config if absent.
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated, e.g. `topk1,topk3,rr,km,ctopk3,an,lacb,lacb_opt`.
        #[arg(long, default_value = "lacb")]
        policies: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        reps: u32,
        /// Record per-interval assignment wall-clock.
        #[arg(long)]
        timing: bool,
    },
    /// Summarize metrics files from one or more runs.
    Compare {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// World directory whose ground truth enables regret.
        #[arg(long)]
        world: Option<PathBuf>,
        /// Directory for summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { config, seed, out, utilities } => {
            let cfg = config::load(config.as_deref())?;
            run::generate(&cfg, seed, &out, utilities)
        }
        Command::Run { config, world, seed, policies, out, reps, timing } => {
            let cfg = config::load(config.as_deref())?;
            let policies = Policy::parse_list(&policies, cfg.engine.fixed_capacity).map_err(|e| CliError::Usage(e.to_string()))?;
            run::run(&run::RunSpec { config: cfg, world_dir: world, seed, policies, out, reps, timing })
        }
        Command::Compare { metrics, world, out } => {
            let summary = compare::compare(&metrics, world.as_deref())?;
            print!("{}", compare::render_table(&summary));
            if let Some(dir) = out {
                compare::write_summary(&summary, &dir)?;
            } else {
                let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
                println!("{json}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("broker-assign: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
