//! Griffin-Lim phase reconstruction from a magnitude spectrogram.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{istft, polar_spectrogram, stft, StftConfig};
use crate::dsp::Waveform;

/// Iteration count used when none is specified.
pub const DEFAULT_ITERS: usize = 32;

/// Reconstruct a waveform from a `[frames, bins]` magnitude grid by iterating
/// signal synthesis against the fixed magnitudes:
///
/// start from zero phase, then `iters` times take the phase of the STFT of
/// the current signal and resynthesize with the given magnitudes. `iters = 0`
/// returns the zero-phase reconstruction.
pub fn griffin_lim<T: Scalar>(
    magnitude: &Tensor<T>,
    cfg: &StftConfig,
    iters: usize,
    out_len: usize,
    sample_rate: u32,
) -> Result<Waveform<T>> {
    run(magnitude, cfg, iters, out_len, sample_rate, false).map(|(w, _)| w)
}

/// As [`griffin_lim`], also returning the projection distance
/// `‖ |STFT(x_k)| − M ‖₂` after each phase update, `iters + 1` values with
/// index 0 for the zero-phase start. The sequence is non-increasing up to
/// floating-point noise.
pub fn griffin_lim_trace<T: Scalar>(
    magnitude: &Tensor<T>,
    cfg: &StftConfig,
    iters: usize,
    out_len: usize,
    sample_rate: u32,
) -> Result<(Waveform<T>, Vec<T>)> {
    let (w, d) = run(magnitude, cfg, iters, out_len, sample_rate, true)?;
    Ok((w, d.expect("trace requested")))
}

fn run<T: Scalar>(
    magnitude: &Tensor<T>,
    cfg: &StftConfig,
    iters: usize,
    out_len: usize,
    sample_rate: u32,
    trace: bool,
) -> Result<(Waveform<T>, Option<Vec<T>>)> {
    cfg.validate()?;
    if magnitude.ndim() != 2 || magnitude.shape()[1] != cfg.freq_bins() {
        return Err(Error::shape(format!(
            "expected [frames, {}] magnitudes, got {:?}",
            cfg.freq_bins(),
            magnitude.shape()
        )));
    }
    if magnitude.data().iter().any(|v| !(*v >= T::zero())) {
        return Err(Error::invalid("magnitudes must be nonnegative and finite"));
    }

    let zero_phase = Tensor::zeros(magnitude.shape().to_vec());
    let mut x = istft(&polar_spectrogram(magnitude, &zero_phase)?, cfg, out_len, sample_rate)?;

    let mut distances = if trace { Some(Vec::with_capacity(iters + 1)) } else { None };
    // The STFT of the current signal serves both the distance trace and the
    // next phase estimate, so each iteration costs one analysis + one
    // synthesis, and the plain variant skips the final analysis.
    let mut spec = if iters > 0 || trace { Some(stft(&x, cfg)?) } else { None };
    if let (Some(d), Some(s)) = (distances.as_mut(), spec.as_ref()) {
        d.push(projection_distance(magnitude, &s.magnitude()));
    }
    for it in 0..iters {
        let phase = spec.take().expect("spectrum present while iterating").phase();
        x = istft(&polar_spectrogram(magnitude, &phase)?, cfg, out_len, sample_rate)?;
        if trace || it + 1 < iters {
            spec = Some(stft(&x, cfg)?);
        }
        if let (Some(d), Some(s)) = (distances.as_mut(), spec.as_ref()) {
            d.push(projection_distance(magnitude, &s.magnitude()));
        }
    }
    Ok((x, distances))
}

fn projection_distance<T: Scalar>(target: &Tensor<T>, got: &Tensor<T>) -> T {
    target
        .data()
        .iter()
        .zip(got.data())
        .map(|(&m, &g)| (g - m) * (g - m))
        .sum::<T>()
        .sqrt()
}
