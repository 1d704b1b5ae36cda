//! Deterministic test-signal generators: pure tones, 1/k harmonic stacks,
//! and harmonic stacks with calibrated additive noise.
//!
//! Everything is synthesized in f64 and peak-normalized to 0.5 before casting
//! to the target scalar type, so signals are identical across dtypes up to
//! rounding.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// What to synthesize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalKind {
    /// A single sinusoid at the fundamental.
    Sine,
    /// All harmonics `k·f0` below Nyquist with amplitudes `1/k`.
    HarmonicStack,
    /// A harmonic stack plus white Gaussian noise at the given SNR.
    NoisyHarmonic { snr_db: f64 },
}

/// Peak amplitude of every generated signal.
pub const PEAK: f64 = 0.5;

/// Generate `duration_s` seconds of the requested signal.
pub fn synth_signal<T: Scalar>(
    kind: SignalKind,
    f0: f64,
    duration_s: f64,
    sample_rate: u32,
    rng: &mut impl Rng,
) -> Result<Waveform<T>> {
    if sample_rate == 0 {
        return Err(Error::invalid("sample rate must be nonzero"));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(f0 > 0.0) || f0 >= nyquist {
        return Err(Error::invalid(format!(
            "fundamental {f0} Hz outside (0, {nyquist}) at {sample_rate} Hz"
        )));
    }
    if !(duration_s > 0.0) {
        return Err(Error::invalid(format!("duration {duration_s} s must be positive")));
    }
    let n = ((duration_s * sample_rate as f64).round() as usize).max(1);
    let w0 = 2.0 * std::f64::consts::PI * f0 / sample_rate as f64;

    let mut samples: Vec<f64> = match kind {
        SignalKind::Sine => (0..n).map(|i| (w0 * i as f64).sin()).collect(),
        SignalKind::HarmonicStack | SignalKind::NoisyHarmonic { .. } => {
            let harmonics = ((nyquist / f0).ceil() as usize).saturating_sub(1).max(1);
            (0..n)
                .map(|i| {
                    (1..=harmonics)
                        .filter(|&k| k as f64 * f0 < nyquist)
                        .map(|k| (w0 * k as f64 * i as f64).sin() / k as f64)
                        .sum()
                })
                .collect()
        }
    };

    if let SignalKind::NoisyHarmonic { snr_db } = kind {
        if !snr_db.is_finite() {
            return Err(Error::invalid(format!("snr {snr_db} dB must be finite")));
        }
        let power = samples.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let noise_std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
        for s in &mut samples {
            let z: f64 = StandardNormal.sample(rng);
            *s += noise_std * z;
        }
    }

    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { PEAK / peak } else { 0.0 };
    Ok(Waveform::new(samples.into_iter().map(|v| T::of_f64(v * scale)).collect(), sample_rate)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sine_has_expected_length_peak_and_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w: Waveform<f64> =
            synth_signal(SignalKind::Sine, 100.0, 0.5, 8000, &mut rng).unwrap();
        assert_eq!(w.len(), 4000);
        let peak = w.samples().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!((peak - PEAK).abs() < 1e-3, "{peak}");
        // 100 Hz at 8 kHz → period 80 samples.
        for i in 0..100 {
            assert!((w.samples()[i] - w.samples()[i + 80]).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_stack_keeps_all_partials_below_nyquist() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // 300 Hz at 8 kHz over 800 samples: every multiple of 10 Hz completes
        // an integer number of cycles, so sine probes are exactly orthogonal.
        let w: Waveform<f64> =
            synth_signal(SignalKind::HarmonicStack, 300.0, 0.1, 8000, &mut rng).unwrap();
        let n = w.len() as f64;
        let corr = |f: f64| {
            let w0 = 2.0 * std::f64::consts::PI * f / 8000.0;
            let s: f64 =
                w.samples().iter().enumerate().map(|(i, &v)| v * (w0 * i as f64).sin()).sum();
            2.0 * s / n
        };
        // Harmonics 1..=13 fit below the 4 kHz Nyquist (13·300 = 3900).
        assert!(corr(300.0).abs() > 0.1);
        assert!(corr(3900.0).abs() > 0.01);
        // Harmonic 14 (4200 Hz) must be dropped: sampled, it would fold onto
        // 3800 Hz, and both probes see the same samples up to sign.
        assert!(corr(3800.0).abs() < 1e-6, "aliased partial present");
        assert!(corr(4200.0).abs() < 1e-6, "aliased partial present");
    }

    #[test]
    fn noisy_harmonic_hits_requested_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let clean: Waveform<f64> =
            synth_signal(SignalKind::HarmonicStack, 220.0, 2.0, 22_050, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noisy: Waveform<f64> =
            synth_signal(SignalKind::NoisyHarmonic { snr_db: 10.0 }, 220.0, 2.0, 22_050, &mut rng)
                .unwrap();
        // Rescale the clean reference to the noisy signal's normalization,
        // then measure the residual power ratio.
        let dot: f64 =
            clean.samples().iter().zip(noisy.samples()).map(|(&a, &b)| a * b).sum();
        let cc: f64 = clean.samples().iter().map(|&a| a * a).sum();
        let alpha = dot / cc;
        let (mut sig, mut noise) = (0.0f64, 0.0f64);
        for (&c, &x) in clean.samples().iter().zip(noisy.samples()) {
            let s = alpha * c;
            sig += s * s;
            noise += (x - s) * (x - s);
        }
        let snr_db = 10.0 * (sig / noise).log10();
        assert!((snr_db - 10.0).abs() < 1.0, "measured {snr_db} dB");
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let gen = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            synth_signal::<f64>(SignalKind::NoisyHarmonic { snr_db: 20.0 }, 150.0, 0.2, 8000, &mut rng)
                .unwrap()
        };
        assert_eq!(gen(7).samples(), gen(7).samples());
        assert_ne!(gen(7).samples(), gen(8).samples());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(synth_signal::<f64>(SignalKind::Sine, 0.0, 1.0, 8000, &mut rng).is_err());
        assert!(synth_signal::<f64>(SignalKind::Sine, 4000.0, 1.0, 8000, &mut rng).is_err());
        assert!(synth_signal::<f64>(SignalKind::Sine, 100.0, 0.0, 8000, &mut rng).is_err());
        assert!(synth_signal::<f64>(SignalKind::Sine, 100.0, 1.0, 0, &mut rng).is_err());
    }
}
