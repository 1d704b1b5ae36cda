//! Mel filterbanks, log-mel spectrograms, and the filterbank pseudo-inverse.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{stft, StftConfig, Waveform};

/// Floor applied to mel energies before the log.
pub const LOG_MEL_FLOOR: f64 = 1e-5;

/// `2595·log10(1 + f/700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10.0f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over linear-frequency magnitude bins.
///
/// Filters are spaced uniformly on the mel scale between `f_min` and `f_max`
/// and area-normalized (each triangle scaled by `2/(right − left)` in Hz) so
/// filter output does not grow with bandwidth.
#[derive(Debug, Clone)]
pub struct MelFilterbank<T> {
    n_mels: usize,
    bins: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
    /// `[n_mels, bins]`, row-major.
    weights: Tensor<T>,
    /// Center frequency of each filter, Hz, strictly increasing.
    centers: Vec<f64>,
}

impl<T: Scalar> MelFilterbank<T> {
    pub fn new(n_mels: usize, bins: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<Self> {
        if n_mels == 0 || bins < 2 {
            return Err(Error::invalid(format!(
                "filterbank needs n_mels ≥ 1 and bins ≥ 2, got {n_mels} and {bins}"
            )));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(0.0..nyquist).contains(&f_min) || f_max <= f_min || f_max > nyquist {
            return Err(Error::invalid(format!(
                "mel range [{f_min}, {f_max}] invalid for nyquist {nyquist}"
            )));
        }

        // bins − 1 == n_fft/2, so bin k sits at k·nyquist/(bins − 1) Hz.
        let bin_hz: Vec<f64> = (0..bins).map(|k| k as f64 * nyquist / (bins - 1) as f64).collect();

        let (mel_lo, mel_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut weights = vec![T::zero(); n_mels * bins];
        for i in 0..n_mels {
            let (left, center, right) = (edges[i], edges[i + 1], edges[i + 2]);
            if !(left < center && center < right) {
                return Err(Error::invalid(format!(
                    "mel filter {i} degenerate: edges {left}, {center}, {right}; \
                     fewer mels or a wider range needed"
                )));
            }
            let norm = 2.0 / (right - left);
            let mut any = false;
            for (k, &f) in bin_hz.iter().enumerate() {
                let up = (f - left) / (center - left);
                let down = (right - f) / (right - center);
                let v = up.min(down).max(0.0) * norm;
                if v > 0.0 {
                    weights[i * bins + k] = T::of_f64(v);
                    any = true;
                }
            }
            if !any {
                return Err(Error::invalid(format!(
                    "mel filter {i} covers no frequency bin; fewer mels or more bins needed"
                )));
            }
        }

        Ok(MelFilterbank {
            n_mels,
            bins,
            sample_rate,
            f_min,
            f_max,
            weights: Tensor::from_vec(vec![n_mels, bins], weights)?,
            centers: edges[1..=n_mels].to_vec(),
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    /// `[n_mels, bins]` filter weights.
    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Apply to a `[frames, bins]` magnitude grid → `[frames, n_mels]`.
    pub fn apply(&self, magnitude: &Tensor<T>) -> Result<Tensor<T>> {
        if magnitude.ndim() != 2 || magnitude.shape()[1] != self.bins {
            return Err(Error::shape(format!(
                "expected [frames, {}] magnitudes, got {:?}",
                self.bins,
                magnitude.shape()
            )));
        }
        let frames = magnitude.shape()[0];
        let w = self.weights.data();
        let m = magnitude.data();
        let mut out = vec![T::zero(); frames * self.n_mels];
        for t in 0..frames {
            for i in 0..self.n_mels {
                let mut acc = T::zero();
                for k in 0..self.bins {
                    acc += w[i * self.bins + k] * m[t * self.bins + k];
                }
                out[t * self.n_mels + i] = acc;
            }
        }
        Tensor::from_vec(vec![frames, self.n_mels], out)
    }

    /// Right pseudo-inverse `Wᵀ(WWᵀ)⁻¹`, shape `[bins, n_mels]`: the
    /// least-squares magnitude estimate from mel energies is
    /// `clamp(mel · pinvᵀ, ≥ 0)`.
    pub fn pseudo_inverse(&self) -> Result<Tensor<T>> {
        let (n, bins) = (self.n_mels, self.bins);
        let w = self.weights.data();
        // Gram matrix G = W·Wᵀ at f64 regardless of T; it is tiny and the
        // elimination benefits from the headroom.
        let mut gram = vec![0.0f64; n * n];
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..bins {
                    acc += w[i * bins + k].as_f64() * w[j * bins + k].as_f64();
                }
                gram[i * n + j] = acc;
                gram[j * n + i] = acc;
            }
        }
        let inv = invert_dense(&mut gram, n)?;
        // pinv[k, j] = Σ_i W[i, k] · G⁻¹[i, j]
        let mut out = vec![T::zero(); bins * n];
        for k in 0..bins {
            for j in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += w[i * bins + k].as_f64() * inv[i * n + j];
                }
                out[k * n + j] = T::of_f64(acc);
            }
        }
        Tensor::from_vec(vec![bins, n], out)
    }

    /// Least-squares magnitude estimate from `[frames, n_mels]` mel energies,
    /// clamped to be nonnegative: `[frames, bins]`.
    pub fn estimate_magnitude(&self, mel: &Tensor<T>) -> Result<Tensor<T>> {
        if mel.ndim() != 2 || mel.shape()[1] != self.n_mels {
            return Err(Error::shape(format!(
                "expected [frames, {}] mel grid, got {:?}",
                self.n_mels,
                mel.shape()
            )));
        }
        let frames = mel.shape()[0];
        let pinv = self.pseudo_inverse()?;
        let p = pinv.data();
        let m = mel.data();
        let mut out = vec![T::zero(); frames * self.bins];
        for t in 0..frames {
            for k in 0..self.bins {
                let mut acc = T::zero();
                for i in 0..self.n_mels {
                    acc += m[t * self.n_mels + i] * p[k * self.n_mels + i];
                }
                out[t * self.bins + k] = acc.max(T::zero());
            }
        }
        Tensor::from_vec(vec![frames, self.bins], out)
    }
}

/// Invert a dense `n×n` matrix by Gauss-Jordan with partial pivoting.
fn invert_dense(a: &mut [f64], n: usize) -> Result<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        let p = a[pivot * n + col];
        if p.abs() < 1e-12 {
            return Err(Error::invalid("filterbank Gram matrix is singular"));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
                inv.swap(col * n + k, pivot * n + k);
            }
        }
        let inv_p = 1.0 / a[col * n + col];
        for k in 0..n {
            a[col * n + k] *= inv_p;
            inv[col * n + k] *= inv_p;
        }
        for row in 0..n {
            if row != col {
                let factor = a[row * n + col];
                if factor != 0.0 {
                    for k in 0..n {
                        a[row * n + k] -= factor * a[col * n + k];
                        inv[row * n + k] -= factor * inv[col * n + k];
                    }
                }
            }
        }
    }
    Ok(inv)
}

/// `ln(max(mel(|STFT(x)|), 1e-5))`, shape `[frames, n_mels]`.
pub fn log_mel_spectrogram<T: Scalar>(
    x: &Waveform<T>,
    cfg: &StftConfig,
    fb: &MelFilterbank<T>,
) -> Result<Tensor<T>> {
    if fb.bins() != cfg.freq_bins() {
        return Err(Error::shape(format!(
            "filterbank has {} bins but stft config implies {}",
            fb.bins(),
            cfg.freq_bins()
        )));
    }
    let mel = fb.apply(&stft(x, cfg)?.magnitude())?;
    let floor = T::of_f64(LOG_MEL_FLOOR);
    Ok(mel.map(|v| v.max(floor).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fb80() -> MelFilterbank<f64> {
        MelFilterbank::new(80, 513, 22050, 0.0, 11025.0).unwrap()
    }

    #[test]
    fn rows_are_nonnegative_with_increasing_centers() {
        let fb = fb80();
        assert!(fb.weights().data().iter().all(|&v| v >= 0.0));
        for pair in fb.centers().windows(2) {
            assert!(pair[0] < pair[1]);
        }
        assert_eq!(fb.centers().len(), 80);
        // Every filter touches at least one bin (construction would have
        // errored otherwise); check directly anyway.
        for i in 0..80 {
            let row = &fb.weights().data()[i * 513..(i + 1) * 513];
            assert!(row.iter().any(|&v| v > 0.0), "filter {i} empty");
        }
    }

    #[test]
    fn filter_peaks_sit_near_centers() {
        let fb = fb80();
        let nyquist = 11025.0;
        for i in 0..80 {
            let row = &fb.weights().data()[i * 513..(i + 1) * 513];
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let peak_hz = peak as f64 * nyquist / 512.0;
            let bin_width = nyquist / 512.0;
            assert!(
                (peak_hz - fb.centers()[i]).abs() <= bin_width + 1e-9,
                "filter {i}: peak at {peak_hz}, center {}",
                fb.centers()[i]
            );
        }
    }

    #[test]
    fn too_many_filters_for_too_few_bins_errors() {
        assert!(MelFilterbank::<f64>::new(80, 33, 22050, 0.0, 11025.0).is_err());
    }

    #[test]
    fn apply_matches_hand_rolled_matmul() {
        let fb = MelFilterbank::<f64>::new(8, 33, 8000, 0.0, 4000.0).unwrap();
        let frames = 5;
        let mag = Tensor::from_vec(
            vec![frames, 33],
            (0..frames * 33).map(|i| ((i * 13 + 1) % 29) as f64 / 29.0).collect(),
        )
        .unwrap();
        let out = fb.apply(&mag).unwrap();
        for t in 0..frames {
            for i in 0..8 {
                let mut expect = 0.0;
                for k in 0..33 {
                    expect += fb.weights().data()[i * 33 + k] * mag.data()[t * 33 + k];
                }
                assert!((out.data()[t * 8 + i] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pseudo_inverse_satisfies_projection_identity() {
        // W · W⁺ must be the identity on mel space (W has full row rank).
        let fb = fb80();
        let w = fb.weights().data();
        let pinv = fb.pseudo_inverse().unwrap();
        let p = pinv.data();
        for i in 0..80 {
            for j in 0..80 {
                let mut acc = 0.0;
                for k in 0..513 {
                    acc += w[i * 513 + k] * p[k * 80 + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((acc - expect).abs() < 1e-8, "W·W⁺[{i},{j}] = {acc}");
            }
        }
    }

    #[test]
    fn log_mel_floor_handles_silence() {
        let cfg = StftConfig::default();
        let x = Waveform::<f64>::new(vec![0.0; 2048], 22050).unwrap();
        let fb = fb80();
        let lm = log_mel_spectrogram(&x, &cfg, &fb).unwrap();
        let expect = LOG_MEL_FLOOR.ln();
        assert!(lm.data().iter().all(|&v| (v - expect).abs() < 1e-12));
    }
}
