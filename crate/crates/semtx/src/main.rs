use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semtx::commands::{self, SweepAxis};
use semtx::{exit, files, AppError, AppResult};
use semtx_core::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "semtx", version, about = "Multi-level semantic feature transmission experiments")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to `<output_dir>/<command>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the world and the menus of one held-out episode.
    GenData,
    /// Train a policy and score it against both greedy baselines.
    Train,
    /// Score a saved policy on the held-out episodes.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// World file; regenerated from the config when omitted.
        #[arg(long)]
        world: Option<PathBuf>,
    },
    /// Train and score every point of a grid, once per sweep seed.
    Sweep {
        /// `tau` (latency budget in seconds) or `bt` (transmitter KB size).
        #[arg(long)]
        axis: String,
        /// Comma-separated grid; the configured grid when omitted.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Solve a small offline instance exactly and compare the greedy policies.
    Oracle {
        /// Instance JSON; recorded from a held-out episode when omitted.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        slots: usize,
        /// Overrides the instance budget in seconds.
        #[arg(long)]
        budget: Option<f64>,
    },
}

fn config(cli: &Cli) -> AppResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => files::load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| Path::new(&cfg.output_dir).join(name))
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports always serialise"));
}

fn run(cli: &Cli) -> AppResult<()> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::GenData => {
            let out = out_dir(cli, &cfg, "data");
            commands::run_gen_data(&cfg, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Train => {
            let out = out_dir(cli, &cfg, "train");
            let summary = commands::run_train(&cfg, &out)?;
            print_json(&summary);
        }
        Command::Eval { checkpoint, world } => {
            let world = match world {
                Some(path) => std::sync::Arc::new(files::read_world(path)?),
                None => commands::build_world(&cfg)?,
            };
            let summary = commands::run_eval(&cfg, world, checkpoint)?;
            if let Some(out) = &cli.out {
                files::write_json(&out.join(commands::SUMMARY_FILE), &summary)?;
            }
            print_json(&summary);
        }
        Command::Sweep { axis, grid } => {
            let axis = SweepAxis::parse(axis)?;
            let grid = grid.clone().unwrap_or_else(|| axis.default_grid(&cfg));
            let out = out_dir(cli, &cfg, &format!("sweep-{}", axis.name()));
            commands::run_sweep(&cfg, axis, &grid, &out)?;
            println!("wrote {}", out.join(commands::SWEEP_FILE).display());
        }
        Command::Oracle { instance, slots, budget } => {
            let (mut inst, seed) = match instance {
                Some(path) => (files::read_instance(path)?, None),
                None => {
                    let (inst, seed) = commands::generate_instance(&cfg, *slots)?;
                    (inst, Some(seed))
                }
            };
            if let Some(b) = budget {
                inst = semtx_core::baselines::OfflineInstance::new(*b, inst.slots)?;
            }
            let report = commands::run_oracle(&cfg, &inst, seed)?;
            if let Some(out) = &cli.out {
                files::write_json(&out.join("oracle.json"), &report)?;
            }
            print_json(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            if let AppError::Core(semtx_core::Error::CapExceeded { decisions, cap }) = &e {
                eprintln!(
                    "instance has {decisions} decisions; raise the oracle caps or shrink the instance (cap {cap})"
                );
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
