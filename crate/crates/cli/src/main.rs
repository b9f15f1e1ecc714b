//! `pcdiff`: synthetic data, denoiser training, diffusion completion,
//! implant extraction and evaluation.
//!
//! Exit codes: 0 success, 1 user error (bad flag, missing file, shape
//! mismatch, divergence), 2 internal invariant violation.

mod commands;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcdiff_core::Error;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "pcdiff", version, about = "Point-cloud diffusion shape completion and implant generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic shell/defect/implant triples.
    Synth(SynthArgs),
    /// Train the denoiser on a synthetic dataset.
    Train(TrainArgs),
    /// Complete a defective volume, optionally as an ensemble.
    Complete(CompleteArgs),
    /// Extract implants from completed volumes.
    Implant(ImplantArgs),
    /// Compare a predicted mask with a reference.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct ScheduleArgs {
    /// Diffusion steps T.
    #[arg(long, default_value_t = 1000)]
    timesteps: usize,
    /// First β; defaults to 1e-4 rescaled by 1000/T.
    #[arg(long)]
    beta_start: Option<f64>,
    /// Last β; defaults to 0.02 rescaled by 1000/T.
    #[arg(long)]
    beta_end: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TrainArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    input: PathBuf,
    /// Model manifest path (the payload goes next to it as `.raw`).
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 512)]
    points_n: usize,
    #[arg(long, default_value_t = 64)]
    points_m: usize,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
struct CompleteArgs {
    /// Defective volume header.
    #[arg(long)]
    input: PathBuf,
    /// Model manifest written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 512)]
    points_n: usize,
    #[arg(long, default_value_t = 64)]
    points_m: usize,
    /// Overrides the model's schedule when given.
    #[arg(long)]
    timesteps: Option<usize>,
    #[arg(long)]
    beta_start: Option<f64>,
    #[arg(long)]
    beta_end: Option<f64>,
    #[arg(long, default_value_t = 1)]
    ensemble: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Poisson grid size per axis.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ImplantArgs {
    /// Completed volume headers, one per ensemble member.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// The defective volume the completions were made from.
    #[arg(long)]
    reference: PathBuf,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
struct EvalArgs {
    /// Predicted mask.
    #[arg(long)]
    input: PathBuf,
    /// Ground-truth mask.
    #[arg(long)]
    reference: PathBuf,
    /// JSON report path; the report is also printed.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = pcdiff_core::metrics::DEFAULT_TOLERANCE_MM)]
    tolerance_mm: f64,
}

/// Numerical breakdowns are invariant violations; everything else is input.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NonFinite(_) | Error::Degenerate(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("pcdiff: {}", first.trim_start_matches("error: ").trim());
            return ExitCode::from(1);
        }
    };
    let result = std::panic::catch_unwind(|| match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Complete(a) => commands::complete(a),
        Command::Implant(a) => commands::implant(a),
        Command::Eval(a) => commands::eval(a),
    });
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("pcdiff: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(2),
    }
}
