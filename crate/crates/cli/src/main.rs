//! `poincare`: figure presets and batch runs for the star-coupled qubit simulator.

#![allow(clippy::needless_range_loop)]

mod commands;
mod error;
mod memory;
mod output;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{AnalyticArgs, BathArgs, RevivalArgs, TraceArgs};
use error::{CliError, CliResult};
use presets::{Fig1bArgs, Fig2Args, Fig3Args, Fig4cArgs};

#[derive(Debug, Parser)]
#[command(name = "poincare", version, about = "Revival statistics of a central qubit coupled to N environment qubits")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "POINCARE_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Master seed; required by every subcommand that draws configurations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// p_e(τ) for one configuration.
    Trace(TraceArgs),
    /// Closed-form revival probability and Poincaré time.
    Analytic(AnalyticArgs),
    /// First-passage and revival statistics over an ensemble.
    Revival(RevivalArgs),
    /// Qubit system embedded in a TLS bath.
    Bath(BathArgs),
    /// Example time traces for several N.
    Fig1b(Fig1bArgs),
    /// Deficit distributions against the small-Δ law.
    Fig2(Fig2Args),
    /// Revival probability and Poincaré time against N.
    Fig3(Fig3Args),
    /// Conservation and leakage with a 10⁴-TLS bath.
    Fig4c(Fig4cArgs),
}

fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let out = &cli.out_dir;
    match &cli.command {
        Command::Trace(a) => commands::trace(a, cli.seed, out),
        Command::Analytic(a) => commands::analytic(a, out),
        Command::Revival(a) => commands::revival(a, cli.seed, out),
        Command::Bath(a) => commands::bath(a, cli.seed, out),
        Command::Fig1b(a) => presets::fig1b(a, cli.seed, out),
        Command::Fig2(a) => presets::fig2(a, cli.seed, out),
        Command::Fig3(a) => presets::fig3(a, cli.seed, out),
        Command::Fig4c(a) => presets::fig4c(a, cli.seed, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", json!({ "error": "usage", "message": msg.trim() }));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(2)
        }
    }
}
