//! Command-line front end for the autovocoder: training, copy synthesis, the
//! Griffin-Lim baseline, real-time-factor benchmarking, and diagnostics.
//!
//! Run `autovocoder <command> --help` for per-command flags. Every command is
//! deterministic for a given seed except the wall-clock fields of `bench`.

mod bench;
mod ops;
mod pgm;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "autovocoder", version, about = "Speech autoencoder toolbox")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the train split of a corpus manifest.
    Train(ops::TrainArgs),
    /// Reconstruct waveforms through the full encode/decode pass.
    CopySynth(ops::CopySynthArgs),
    /// Griffin-Lim phase reconstruction from full-resolution magnitudes.
    GriffinLim(ops::GriffinLimArgs),
    /// Benchmark decoder and Griffin-Lim real-time factors.
    Bench(ops::BenchArgs),
    /// Render a spectrogram or latent grid as a P5 graymap plus CSV.
    DumpSpectrogram(ops::DumpSpectrogramArgs),
    /// Finite-difference verification of every backward rule (float64).
    Gradcheck(ops::GradcheckArgs),
    /// Synthesize a small corpus of noisy harmonic signals plus manifest.
    MakeToyCorpus(ops::MakeToyCorpusArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(args) => ops::train(args),
        Command::CopySynth(args) => ops::copy_synth(args),
        Command::GriffinLim(args) => ops::griffin_lim(args),
        Command::Bench(args) => ops::bench(args),
        Command::DumpSpectrogram(args) => ops::dump_spectrogram(args),
        Command::Gradcheck(args) => ops::gradcheck(args),
        Command::MakeToyCorpus(args) => ops::make_toy_corpus(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
