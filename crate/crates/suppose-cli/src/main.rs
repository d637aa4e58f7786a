//! Command-line front end: synthesize fixtures, calibrate the response,
//! fit source clouds and evaluate reconstructions.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit code for invalid inputs.
pub const EXIT_INPUT: u8 = 2;
/// Exit code when the solver hit its generation ceiling above the noise
/// floor (outputs are still written).
pub const EXIT_CEILING: u8 = 3;

#[derive(Parser)]
#[command(
    name = "suppose",
    version,
    about = "Super-resolution deconvolution by superposition of virtual point sources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic acquisitions with ground truth sidecars.
    Synth(commands::SynthArgs),
    /// Fit a response model to point-like calibration records.
    Calibrate(commands::CalibrateArgs),
    /// Fit a cloud of virtual point sources to a signal.
    Fit(commands::FitArgs),
    /// Score a fitted solution against ground truth.
    Evaluate(commands::EvaluateArgs),
}

fn main() -> ExitCode {
    // Thread count: SUPPOSE_THREADS, default all available cores.
    if let Ok(threads) = std::env::var("SUPPOSE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::run_synth(args),
        Command::Calibrate(args) => commands::run_calibrate(args),
        Command::Fit(args) => commands::run_fit(args),
        Command::Evaluate(args) => commands::run_evaluate(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
