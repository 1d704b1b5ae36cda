//! Implementations of the CLI subcommands.
//!
//! Everything here runs single precision (`f32`); checkpoints created by
//! `train` therefore load back everywhere else. The gradient checker is the
//! exception — its suite is fixed at `f64` internally, where finite
//! differences are meaningful.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use autovocoder::audio::corpus::{CorpusManifest, ManifestEntry, Split};
use autovocoder::audio::synth::{synth_signal, SignalKind};
use autovocoder::audio::wav::{load_waveform, save_waveform};
use autovocoder::dsp::griffin_lim::{griffin_lim_trace, DEFAULT_ITERS};
use autovocoder::dsp::mel::log_mel_spectrogram;
use autovocoder::losses::{mel_l1_distance, time_domain_mse};
use autovocoder::trainer::Trainer;
use autovocoder::{dsp, verify, Error, Result, RunConfig, Waveform64};

use crate::bench::{self, WallClock};
use crate::pgm;
use crate::util;

/// Column schema of the per-step training metrics CSV.
pub const METRICS_HEADER: &str =
    "step,lr_g,lr_d,total,mel_l1,time_mse,adversarial,feature_match,d_loss,grad_norm_g,grad_norm_d";

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_file(p),
        None => Ok(RunConfig::default()),
    }
}

// ---------------------------------------------------------------------------
// train

#[derive(Args)]
pub struct TrainArgs {
    /// Config file (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus manifest (`path<TAB>split<TAB>duration_s` lines).
    #[arg(long)]
    manifest: PathBuf,
    /// Training steps to run in this invocation.
    #[arg(long)]
    steps: u64,
    /// Checkpoint to write when done.
    #[arg(long)]
    out: PathBuf,
    /// Resume from a checkpoint; its embedded config wins over --config/--seed.
    #[arg(long, conflicts_with_all = ["config", "seed"])]
    resume: Option<PathBuf>,
    /// Per-step metrics CSV (header documented in the README).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Master seed; model/discriminator/training seeds fan out from it.
    /// Falls back to the AV_SEED environment variable, then the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Additionally save the checkpoint every N steps.
    #[arg(long)]
    save_every: Option<u64>,
}

pub fn train(args: TrainArgs) -> Result<ExitCode> {
    let mut trainer: Trainer<f32> = match &args.resume {
        Some(path) => Trainer::load_checkpoint(path)?,
        None => {
            let mut cfg = load_config(args.config.as_ref())?;
            if let Some(seed) = util::resolve_seed(args.seed)? {
                cfg = cfg.with_master_seed(seed);
            }
            Trainer::new(cfg)?
        }
    };
    let manifest = CorpusManifest::load(&args.manifest)?;
    let rate = trainer.config().model.sample_rate;
    let corpus = manifest.load_split::<f32>(Split::Train, rate)?;
    trainer.set_steps_per_epoch_from_corpus(&corpus);

    let mut metrics_out = match &args.metrics {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "{METRICS_HEADER}")?;
            Some(w)
        }
        None => None,
    };

    let progress_every = (args.steps / 10).max(1);
    for i in 0..args.steps {
        let batch = trainer.sample_batch(&corpus)?;
        let m = trainer.train_step(&batch)?;
        if let Some(w) = metrics_out.as_mut() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                m.step,
                m.lr_g,
                m.lr_d,
                m.total,
                m.mel_l1,
                m.time_mse,
                m.adversarial,
                m.feature_match,
                m.d_loss,
                m.grad_norm_g,
                m.grad_norm_d
            )?;
        }
        if (i + 1) % progress_every == 0 || i + 1 == args.steps {
            eprintln!(
                "step {:>7}  total {:>10.5}  mel {:>9.5}  time {:>11.5e}  d {:>9.5}",
                m.step, m.total, m.mel_l1, m.time_mse, m.d_loss
            );
        }
        if let Some(every) = args.save_every {
            if every > 0 && m.step % every == 0 {
                trainer.save_checkpoint(&args.out)?;
            }
        }
    }
    trainer.save_checkpoint(&args.out)?;
    println!("step {}: checkpoint written to {}", trainer.step_count(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// copy-synth

#[derive(Args)]
pub struct CopySynthArgs {
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Input WAV file or directory of WAVs.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory; each input is written under its own name.
    #[arg(long)]
    out: PathBuf,
    /// Per-file metrics CSV (`file,mel_l1,time_mse`).
    #[arg(long)]
    metrics: Option<PathBuf>,
}

pub fn copy_synth(args: CopySynthArgs) -> Result<ExitCode> {
    let trainer: Trainer<f32> = Trainer::load_checkpoint(&args.ckpt)?;
    let cfg = trainer.config();
    let model = trainer.model();
    let fb = cfg.mel.build_filterbank::<f32>(&cfg.model.stft, cfg.model.sample_rate)?;
    let files = util::wav_inputs(&args.input)?;
    std::fs::create_dir_all(&args.out)?;

    let mut metrics_out = match &args.metrics {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "file,mel_l1,time_mse")?;
            Some(w)
        }
        None => None,
    };
    for path in &files {
        let x = load_waveform::<f32>(path, Some(cfg.model.sample_rate))?;
        let y = model.copy_synth(&x)?;
        let label = util::file_label(path);
        save_waveform(&args.out.join(&label), &y)?;
        let mel = mel_l1_distance(&y, &x, &cfg.model.stft, &fb)?;
        let mse = time_domain_mse(&y, &x)?;
        println!("{label}: mel_l1 {mel:.6}  time_mse {mse:.6e}");
        if let Some(w) = metrics_out.as_mut() {
            writeln!(w, "{label},{mel},{mse}")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// griffin-lim

#[derive(Args)]
pub struct GriffinLimArgs {
    /// Input WAV file or directory of WAVs.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Phase-update iterations; 0 writes the zero-phase reconstruction.
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    iters: usize,
    /// Config for the analysis STFT and sample rate; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-iteration projection-distance CSV (`file,iter,distance`).
    #[arg(long)]
    trace: Option<PathBuf>,
}

pub fn griffin_lim(args: GriffinLimArgs) -> Result<ExitCode> {
    let cfg = load_config(args.config.as_ref())?;
    let stft_cfg = &cfg.model.stft;
    let rate = cfg.model.sample_rate;
    let files = util::wav_inputs(&args.input)?;
    std::fs::create_dir_all(&args.out)?;

    let mut trace_out = match &args.trace {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "file,iter,distance")?;
            Some(w)
        }
        None => None,
    };
    for path in &files {
        let x = load_waveform::<f32>(path, Some(rate))?;
        // Full-resolution magnitudes — no mel reduction on this path.
        let mag = dsp::stft(&x, stft_cfg)?.magnitude();
        let (y, distances) = griffin_lim_trace(&mag, stft_cfg, args.iters, x.len(), rate)?;
        let label = util::file_label(path);
        save_waveform(&args.out.join(&label), &y)?;
        println!(
            "{label}: projection distance {:.6} → {:.6} over {} iterations",
            distances.first().copied().unwrap_or(0.0),
            distances.last().copied().unwrap_or(0.0),
            args.iters
        );
        if let Some(w) = trace_out.as_mut() {
            for (it, d) in distances.iter().enumerate() {
                writeln!(w, "{label},{it},{d}")?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// bench

#[derive(Args)]
pub struct BenchArgs {
    /// Trained checkpoint for the decoder under test.
    #[arg(long)]
    ckpt: PathBuf,
    /// Benchmark set: a directory (or file) of ≥ 2 WAVs with varied durations.
    #[arg(long)]
    set: PathBuf,
    /// Times each utterance is generated within one run.
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Independent runs; the report carries each plus mean and median.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Griffin-Lim iterations for the baseline.
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    iters: usize,
    /// Report CSV (`system,run,audio_s,wall_s,rtf`).
    #[arg(long)]
    out: PathBuf,
}

pub fn bench(args: BenchArgs) -> Result<ExitCode> {
    if args.repeats == 0 || args.runs == 0 {
        return Err(Error::invalid("--repeats and --runs must be positive"));
    }
    let trainer: Trainer<f32> = Trainer::load_checkpoint(&args.ckpt)?;
    let cfg = trainer.config();
    let model = trainer.model();
    let files = util::wav_inputs(&args.set)?;
    if files.len() < 2 {
        return Err(Error::invalid("benchmark set needs at least 2 files"));
    }

    // Everything the synthesis paths consume is precomputed here: latents for
    // the decoder, magnitude grids for Griffin-Lim. Loading and analysis are
    // excluded from the timed region by construction.
    let mut latents = Vec::new();
    let mut magnitudes = Vec::new();
    let mut lengths = Vec::new();
    let mut durations = Vec::new();
    for path in &files {
        let x = load_waveform::<f32>(path, Some(cfg.model.sample_rate))?;
        latents.push(model.encode(&x)?);
        magnitudes.push(dsp::stft(&x, &cfg.model.stft)?.magnitude());
        lengths.push(x.len());
        durations.push(x.duration_s());
    }

    let gl_label = format!("griffin-lim-{}", args.iters);
    let mut clock = WallClock::new();
    let mut rows: Vec<(String, String, String, String, f64)> = Vec::new();
    let mut summary = Vec::new();
    for (system, synth) in [
        (
            "autovocoder",
            Box::new(|i: usize| {
                let y = model.decode(&latents[i], lengths[i]).expect("latents sized by encode");
                std::hint::black_box(&y);
            }) as Box<dyn FnMut(usize)>,
        ),
        (
            gl_label.as_str(),
            Box::new(|i: usize| {
                let y = dsp::griffin_lim::griffin_lim(
                    &magnitudes[i],
                    &cfg.model.stft,
                    args.iters,
                    lengths[i],
                    cfg.model.sample_rate,
                )
                .expect("magnitudes sized by stft");
                std::hint::black_box(&y);
            }),
        ),
    ] {
        let mut synth = synth;
        let mut rtfs = Vec::new();
        for run in 1..=args.runs {
            let r = bench::measure_rtf(&durations, args.repeats, &mut clock, &mut synth);
            rows.push((
                system.to_string(),
                run.to_string(),
                format!("{:.3}", r.audio_s),
                format!("{:.6}", r.wall_s),
                r.rtf(),
            ));
            rtfs.push(r.rtf());
        }
        let (m, md) = (bench::mean(&rtfs), bench::median(&rtfs));
        rows.push((system.to_string(), "mean".into(), String::new(), String::new(), m));
        rows.push((system.to_string(), "median".into(), String::new(), String::new(), md));
        println!(
            "{system:<16} RTF mean {m:8.2}  median {md:8.2}  runs {:?}",
            rtfs.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
        summary.push(m);
    }
    println!("decoder vs {gl_label} mean-RTF ratio: {:.2}×", summary[0] / summary[1]);

    let mut w = BufWriter::new(File::create(&args.out)?);
    writeln!(w, "system,run,audio_s,wall_s,rtf")?;
    for (system, run, audio, wall, rtf) in &rows {
        writeln!(w, "{system},{run},{audio},{wall},{rtf}")?;
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// dump-spectrogram

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridKind {
    /// Log-mel spectrogram (the training feature).
    Mel,
    /// Log magnitude at full STFT resolution.
    Mag,
    /// Encoder embedding over time (requires --ckpt).
    Latent,
}

#[derive(Args)]
pub struct DumpSpectrogramArgs {
    /// Input WAV file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output P5 graymap path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = GridKind::Mel)]
    kind: GridKind,
    /// Also write the raw grid values, one CSV row per frame.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Checkpoint, consulted only for --kind latent.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Config for the analysis front end; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn dump_spectrogram(args: DumpSpectrogramArgs) -> Result<ExitCode> {
    let (grid, frames, bins) = match args.kind {
        GridKind::Mel => {
            let cfg = load_config(args.config.as_ref())?;
            let x = load_waveform::<f32>(&args.input, Some(cfg.model.sample_rate))?;
            let fb = cfg.mel.build_filterbank::<f32>(&cfg.model.stft, cfg.model.sample_rate)?;
            let lm = log_mel_spectrogram(&x, &cfg.model.stft, &fb)?;
            let (f, b) = (lm.shape()[0], lm.shape()[1]);
            (lm.into_data(), f, b)
        }
        GridKind::Mag => {
            let cfg = load_config(args.config.as_ref())?;
            let x = load_waveform::<f32>(&args.input, Some(cfg.model.sample_rate))?;
            let mag = dsp::stft(&x, &cfg.model.stft)?.magnitude();
            let (f, b) = (mag.shape()[0], mag.shape()[1]);
            let log: Vec<f32> = mag.data().iter().map(|&m| m.max(1e-5).ln()).collect();
            (log, f, b)
        }
        GridKind::Latent => {
            let ckpt = args
                .ckpt
                .as_ref()
                .ok_or_else(|| Error::invalid("--kind latent requires --ckpt"))?;
            let trainer: Trainer<f32> = Trainer::load_checkpoint(ckpt)?;
            let x = load_waveform::<f32>(&args.input, Some(trainer.config().model.sample_rate))?;
            let z = trainer.model().encode(&x)?;
            let (f, d) = (z.frames(), z.dim());
            (z.into_values().into_data(), f, d)
        }
    };
    pgm::write_pgm(&args.out, frames, bins, &grid)?;
    println!("{}: {frames}×{bins} grid → {}", util::file_label(&args.input), args.out.display());
    if let Some(path) = &args.csv {
        let mut w = BufWriter::new(File::create(path)?);
        for row in grid.chunks(bins) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// gradcheck

#[derive(Args)]
pub struct GradcheckArgs {
    /// Scale every backward cotangent by 2% to prove the checker notices.
    #[arg(long)]
    corrupt: bool,
}

pub fn gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let fault = args.corrupt.then_some(1.02);
    let results = verify::gradcheck_suite(fault)?;
    let mut failed = 0usize;
    for r in &results {
        println!(
            "{} {:<24} max_rel_err {:.3e}  budget {:.0e}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.max_rel_err,
            r.threshold
        );
        failed += usize::from(!r.passed());
    }
    println!("{} checks, {failed} failed", results.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

// ---------------------------------------------------------------------------
// make-toy-corpus

#[derive(Args)]
pub struct MakeToyCorpusArgs {
    /// Output directory; receives the WAVs plus `manifest.tsv`.
    #[arg(long)]
    out: PathBuf,
    /// Number of files to synthesize.
    #[arg(long, default_value_t = 8)]
    files: usize,
    /// Base seconds per file; actual lengths spread 0.75–1.25× across files.
    #[arg(long, default_value_t = 8.0)]
    duration: f64,
    #[arg(long, default_value_t = 22_050)]
    sample_rate: u32,
    /// Signal-to-noise ratio of the harmonic stacks, in dB.
    #[arg(long, default_value_t = 30.0)]
    snr_db: f64,
    /// Generation seed; falls back to AV_SEED, then 2024.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn make_toy_corpus(args: MakeToyCorpusArgs) -> Result<ExitCode> {
    if args.files == 0 {
        return Err(Error::invalid("--files must be positive"));
    }
    let seed = util::resolve_seed(args.seed)?.unwrap_or(2024);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::fs::create_dir_all(&args.out)?;

    let mut entries = Vec::new();
    for i in 0..args.files {
        // Fundamentals walk a rough speech range; durations vary so the
        // benchmark protocol sees utterances of different lengths.
        let f0 = 90.0 * 1.25f64.powi((i % 7) as i32) * (1.0 + 0.08 * rng.random::<f64>());
        let spread = if args.files > 1 {
            0.75 + 0.5 * i as f64 / (args.files - 1) as f64
        } else {
            1.0
        };
        let w: Waveform64 = synth_signal(
            SignalKind::NoisyHarmonic { snr_db: args.snr_db },
            f0,
            args.duration * spread,
            args.sample_rate,
            &mut rng,
        )?;
        let name = format!("toy_{i:03}.wav");
        save_waveform(&args.out.join(&name), &w)?;
        let split = if args.files >= 3 && i == args.files - 1 {
            Split::Test
        } else if args.files >= 4 && i == args.files - 2 {
            Split::Val
        } else {
            Split::Train
        };
        entries.push(ManifestEntry { path: name.into(), split, duration_s: w.duration_s() });
    }
    let manifest = CorpusManifest { entries };
    let manifest_path = args.out.join("manifest.tsv");
    manifest.save(&manifest_path)?;
    println!(
        "{} files ({:.1} s train / {:.1} s val / {:.1} s test) → {}",
        args.files,
        manifest.total_duration_s(Split::Train),
        manifest.total_duration_s(Split::Val),
        manifest.total_duration_s(Split::Test),
        manifest_path.display()
    );
    Ok(ExitCode::SUCCESS)
}
