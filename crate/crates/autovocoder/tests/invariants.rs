//! Cross-module property tests over the public API.
//!
//! Each property is an algebraic identity of the pipeline (transform
//! inverses, representation bijections, serialization round trips), checked
//! over randomized inputs. Tolerances are machine-precision budgets for the
//! dtype under test, not modelling accuracy: f64 properties get ~1e-9 where
//! only rounding can intrude, and integer/text round trips must be exact.

use proptest::prelude::*;

use autovocoder::audio::synth::{synth_signal, SignalKind};
use autovocoder::audio::wav::{pcm_to_waveform, read_wav, waveform_to_pcm, write_wav, PcmAudio};
use autovocoder::config::MelConfig;
use autovocoder::dsp::griffin_lim::griffin_lim_trace;
use autovocoder::dsp::{
    complex_to_stack, istft, stack_to_complex, stft, Complex, ComplexSpectrogram, Head,
    StftConfig, Waveform,
};
use autovocoder::model::{Autovocoder, ModelConfig};
use autovocoder::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform noise in [-0.5, 0.5], deterministic in the seed.
fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random::<f64>() - 0.5).collect()
}

/// Window/hop pairs satisfying COLA for the periodic Hann window.
fn any_stft_config() -> impl Strategy<Value = StftConfig> {
    (prop_oneof![Just(64usize), Just(128), Just(256), Just(512), Just(1024)], 2usize..=4)
        .prop_map(|(n, div)| StftConfig::new(n, n >> div))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// iSTFT undoes STFT exactly (up to f64 rounding) on interior samples,
    /// for every valid window/hop pair; edges taper by construction.
    #[test]
    fn istft_inverts_stft_interior(
        cfg in any_stft_config(),
        extra in 0usize..2000,
        seed in 0u64..1 << 32,
    ) {
        let len = 2 * cfg.window_size + extra;
        let x = Waveform::new(noise(len, seed), 16_000).unwrap();
        let spec = stft(&x, &cfg).unwrap();
        let y = istft(&spec, &cfg, len, 16_000).unwrap();
        let n = cfg.window_size;
        for i in n..len - n {
            let err = (x.samples()[i] - y.samples()[i]).abs();
            prop_assert!(err < 1e-9, "sample {i}: err {err:.3e} (cfg {}x{})", n, cfg.hop);
        }
    }

    /// The STFT is a linear map: stft(a·x + b·y) = a·stft(x) + b·stft(y).
    #[test]
    fn stft_is_linear(
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        seed in 0u64..1 << 32,
        extra in 0usize..500,
    ) {
        let cfg = StftConfig::new(256, 64);
        let len = 600 + extra;
        let xv = noise(len, seed);
        let yv = noise(len, seed ^ 0x9e37_79b9);
        let mixed: Vec<f64> = xv.iter().zip(&yv).map(|(&x, &y)| a * x + b * y).collect();
        let sx = stft(&Waveform::new(xv, 8000).unwrap(), &cfg).unwrap();
        let sy = stft(&Waveform::new(yv, 8000).unwrap(), &cfg).unwrap();
        let sm = stft(&Waveform::new(mixed, 8000).unwrap(), &cfg).unwrap();
        for (m, (x, y)) in sm.values.iter().zip(sx.values.iter().zip(&sy.values)) {
            let want = Complex::new(a * x.re + b * y.re, a * x.im + b * y.im);
            let err = ((m.re - want.re).powi(2) + (m.im - want.im).powi(2)).sqrt();
            // Budget scales with the bin magnitude: cancellation in the
            // overlap sums leaves relative, not absolute, accuracy.
            prop_assert!(err <= 1e-9 * (1.0 + want.norm()), "bin err {err:.3e}");
        }
    }

    /// complex → four-channel stack → complex is the identity under every
    /// output head (magnitude/phase and real/imaginary are consistent).
    #[test]
    fn stack_to_complex_inverts_complex_to_stack(
        frames in 1usize..6,
        bins in 1usize..12,
        seed in 0u64..1 << 32,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<Complex<f64>> = (0..frames * bins)
            .map(|_| Complex::new(rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0))
            .collect();
        let spec = ComplexSpectrogram::new(frames, bins, values).unwrap();
        let stack = complex_to_stack(&spec);
        for head in [Head::Cartesian, Head::Polar, Head::Mean4] {
            let planes: Vec<_> = match head {
                Head::Cartesian => vec![&stack.real, &stack.imag],
                Head::Polar => vec![&stack.magnitude, &stack.phase],
                Head::Mean4 => vec![&stack.magnitude, &stack.phase, &stack.real, &stack.imag],
            };
            let back = stack_to_complex(&planes, head).unwrap();
            for (got, want) in back.values.iter().zip(&spec.values) {
                let err = (got - want).norm();
                prop_assert!(err <= 1e-12 * (1.0 + want.norm()), "{head:?}: err {err:.3e}");
            }
        }
    }

    /// Griffin-Lim's projection distance never increases across iterations
    /// (alternating projections onto two sets), up to rounding slack.
    #[test]
    fn griffin_lim_distance_is_non_increasing(
        f0 in 80.0f64..900.0,
        seed in 0u64..1 << 32,
    ) {
        let cfg = StftConfig::new(256, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = synth_signal::<f64>(
            SignalKind::NoisyHarmonic { snr_db: 20.0 }, f0, 0.25, 8000, &mut rng,
        ).unwrap();
        let mag = stft(&x, &cfg).unwrap().magnitude();
        let (_, dist) = griffin_lim_trace(&mag, &cfg, 8, x.len(), 8000).unwrap();
        for w in dist.windows(2) {
            prop_assert!(
                w[1] <= w[0] + 1e-9 * (1.0 + w[0]),
                "distance rose: {} -> {}", w[0], w[1]
            );
        }
    }

    /// Config text serialization is lossless: parse(to_text(cfg)) == cfg.
    #[test]
    fn config_text_round_trips(
        nexp in 7u32..11,
        dim in 1usize..512,
        dropout in 0.0f64..0.9,
        lr in 1e-5f64..1e-2,
        lambda_mel in 0.0f64..100.0,
        n_mels in 10usize..120,
        head_pick in 0usize..3,
        f_max in prop_oneof![Just(None), (1000.0f64..11025.0).prop_map(Some)],
    ) {
        let mut cfg = RunConfig::default();
        cfg.model.stft = StftConfig::new(1 << nexp, 1 << (nexp - 2));
        cfg.model.representation_dim = dim;
        cfg.model.embedding_dropout = dropout;
        cfg.model.head = [Head::Cartesian, Head::Polar, Head::Mean4][head_pick];
        cfg.train.lr = lr;
        cfg.train.weights.mel = lambda_mel;
        cfg.mel = MelConfig { n_mels, f_min: 0.0, f_max };
        let parsed = RunConfig::parse_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(parsed, cfg);
    }

    /// WAV files round-trip PCM16 content exactly.
    #[test]
    fn wav_file_round_trips_pcm_exactly(
        samples in proptest::collection::vec(any::<i16>(), 1..4000),
        rate in prop_oneof![Just(8000u32), Just(16_000), Just(22_050), Just(44_100)],
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let audio = PcmAudio { samples, sample_rate: rate };
        write_wav(&path, &audio).unwrap();
        prop_assert_eq!(read_wav(&path).unwrap(), audio);
    }

    /// Float → PCM16 → float stays within one quantization step.
    #[test]
    fn pcm_quantization_error_is_bounded(
        samples in proptest::collection::vec(-1.0f64..=1.0, 1..2000),
    ) {
        let wave = Waveform::new(samples, 22_050).unwrap();
        let back = pcm_to_waveform::<f64>(&waveform_to_pcm(&wave)).unwrap();
        for (&x, &y) in wave.samples().iter().zip(back.samples()) {
            // Clipping at +1.0 maps to 32767/32768; everything else rounds.
            prop_assert!((x - y).abs() <= 1.0 / 32_768.0 + 1e-12);
        }
    }
}

proptest! {
    // Model-level properties run a real encoder/decoder; keep the case count
    // low and the model tiny so the suite stays fast.
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Latent shape is [num_frames, d] for any input length, and eval-mode
    /// encode/decode are deterministic with exact output length.
    #[test]
    fn encode_decode_shapes_and_determinism(
        len in 256usize..2000,
        seed in 0u64..1 << 32,
    ) {
        let cfg = ModelConfig {
            stft: StftConfig::new(64, 16),
            sample_rate: 8000,
            representation_dim: 8,
            head: Head::Cartesian,
            embedding_dropout: 0.0,
            seed: 42,
        };
        let model = Autovocoder::<f32>::new(cfg.clone()).unwrap();
        let x = Waveform::new(
            noise(len, seed).into_iter().map(|v| v as f32).collect::<Vec<f32>>(),
            8000,
        ).unwrap();
        let z = model.encode(&x).unwrap();
        prop_assert_eq!(z.frames(), cfg.stft.num_frames(len));
        prop_assert_eq!(z.dim(), 8);
        let z2 = model.encode(&x).unwrap();
        prop_assert_eq!(z.values(), z2.values());
        let y = model.decode(&z, len).unwrap();
        prop_assert_eq!(y.len(), len);
        prop_assert!(y.samples().iter().all(|v| v.is_finite()));
        let y2 = model.decode(&z, len).unwrap();
        prop_assert_eq!(y.samples(), y2.samples());
    }
}
