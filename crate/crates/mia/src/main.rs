//! Command-line front end: parses flags, loads the experiment config,
//! applies overrides, and dispatches to the pipeline commands. All
//! substance lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mia::cli::config::ExperimentConfig;
use mia::cli::pipeline;

#[derive(Parser)]
#[command(
    name = "mia",
    version,
    about = "Membership-inference auditing on a synthetic learning stack"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding [output] dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker thread bound; outputs are identical at any value.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Comma-separated alpha list, overriding [attack] alphas.
    #[arg(long, global = true)]
    alpha: Option<String>,

    /// Smoothing method override: linear, logit, min, or avg.
    #[arg(long, global = true)]
    method: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic population and write pool.csv.
    Synth,
    /// Train the target model; write target.json and fingerprints.csv.
    Train,
    /// Build the out-world loss matrices for the configured attacks.
    Signals,
    /// Calibrate the attacks and write per-alpha membership decisions.
    Attack,
    /// Write ROC curves, agreement tables, histograms, and a summary.
    Eval,
    /// Play the configured inference game; write the trial transcript.
    Game,
    /// Compare the loss attack against the exact likelihood ratio.
    Lemma1,
}

fn run(cli: Cli) -> mia::Result<Vec<PathBuf>> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| mia::Error::Config(format!("--workers: {e}")))?;
    }
    let config_path = cli
        .config
        .ok_or_else(|| mia::Error::Config("no --config <path> given".into()))?;
    let mut config = ExperimentConfig::load(&config_path)?;
    config.apply_overrides(cli.alpha.as_deref(), cli.method.as_deref(), cli.out.as_deref())?;
    match cli.command {
        Command::Synth => pipeline::cmd_synth(&config),
        Command::Train => pipeline::cmd_train(&config),
        Command::Signals => pipeline::cmd_signals(&config),
        Command::Attack => pipeline::cmd_attack(&config),
        Command::Eval => pipeline::cmd_eval(&config),
        Command::Game => pipeline::cmd_game(&config),
        Command::Lemma1 => pipeline::cmd_lemma1(&config),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(written) => {
            for path in written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
