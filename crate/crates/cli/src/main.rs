//! Command-line surface for the mediation analysis pipeline: dataset
//! analysis, mediator screening, effect estimation, and the Monte Carlo
//! studies.
//!
//! Exit codes: 0 on success, 2 on validation/configuration errors, 3 on
//! numerical failures. All randomness flows from the single --seed flag;
//! outputs are byte-identical across reruns and thread counts (wall-clock
//! timing lives only in the manifest).

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "medlong",
    version,
    about = "High-dimensional mediation analysis for sparse longitudinal outcomes"
)]
struct Cli {
    /// Worker thread count (default: all cores, or MEDLONG_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline on a dataset: per-mediator tests, FDR screening,
    /// joint model, and effect curves.
    Analyze(commands::AnalyzeArgs),
    /// Per-mediator tests and FDR screening only.
    Screen(commands::AnalyzeArgs),
    /// Joint model and effect curves for an explicit mediator set.
    Effects(commands::EffectsArgs),
    /// Monte Carlo screening-frequency and estimation study.
    Simulate(commands::SimulateArgs),
    /// Monte Carlo power study over an effect-size grid.
    Power(commands::PowerArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let threads = cli.threads.or_else(|| {
        std::env::var("MEDLONG_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: failed to configure {t} worker threads: {e}");
            return ExitCode::from(2);
        }
    }

    let result = match cli.command {
        Command::Analyze(args) => commands::run_analyze(&args, true),
        Command::Screen(args) => commands::run_analyze(&args, false),
        Command::Effects(args) => commands::run_effects(&args),
        Command::Simulate(args) => commands::run_simulate(&args),
        Command::Power(args) => commands::run_power(&args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
