//! Signal framing, overlap-add, and the synthesis-window envelope.
//!
//! Centered framing places frame `m` over samples `[m·hop − n/2, m·hop + n/2)`,
//! so frame count for a length-`len` signal is `len/hop + 1`. Out-of-range
//! indices are filled by reflection (`−i` on the left, `2(len−1)−i` on the
//! right) or by zeros. Single reflection requires `len ≥ n/2 + 1`.
//!
//! Overlap-add and the envelope are written as gathers over each output
//! position so results are independent of frame iteration order.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::PadMode;

/// Framing geometry: window length, hop, and how the edges are padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    pub n: usize,
    pub hop: usize,
    pub pad: PadMode,
}

impl FrameSpec {
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.n < 2 || self.n % 2 != 0 {
            return Err(Error::invalid(format!(
                "frame length must be even and ≥ 2, got {}",
                self.n
            )));
        }
        if self.hop == 0 || self.hop > self.n {
            return Err(Error::invalid(format!(
                "hop must satisfy 0 < hop ≤ {}, got {}",
                self.n, self.hop
            )));
        }
        if self.pad == PadMode::Reflect && len < self.n / 2 + 1 {
            return Err(Error::invalid(format!(
                "signal of length {len} is too short to reflect-pad a window of {}; need ≥ {}",
                self.n,
                self.n / 2 + 1
            )));
        }
        Ok(())
    }

    /// Centered frame count: `len/hop + 1`.
    pub fn num_frames(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    /// Signal index feeding frame position `(m, j)`, or `None` for a zero pad.
    fn source_index(&self, len: usize, m: usize, j: usize) -> Option<usize> {
        let i = (m * self.hop + j) as isize - (self.n / 2) as isize;
        let l = len as isize;
        let i = if i < 0 {
            match self.pad {
                PadMode::Reflect => -i,
                PadMode::Zero => return None,
            }
        } else if i >= l {
            match self.pad {
                PadMode::Reflect => 2 * (l - 1) - i,
                PadMode::Zero => return None,
            }
        } else {
            i
        };
        debug_assert!(0 <= i && i < l);
        Some(i as usize)
    }
}

/// Extract centered frames: `x[len]` → `[num_frames, n]`.
pub fn frame_signal<T: Scalar>(x: &[T], spec: FrameSpec) -> Result<Vec<T>> {
    spec.validate(x.len())?;
    let t = spec.num_frames(x.len());
    let mut out = vec![T::zero(); t * spec.n];
    for m in 0..t {
        for j in 0..spec.n {
            if let Some(i) = spec.source_index(x.len(), m, j) {
                out[m * spec.n + j] = x[i];
            }
        }
    }
    Ok(out)
}

/// Adjoint of `frame_signal`: cotangent `[num_frames, n]` → `[len]`.
///
/// Every frame slot that read sample `i` contributes its cotangent back to
/// position `i`; reflected reads accumulate onto their interior source.
pub fn frame_signal_adjoint<T: Scalar>(cot: &[T], len: usize, spec: FrameSpec) -> Result<Vec<T>> {
    spec.validate(len)?;
    let t = spec.num_frames(len);
    if cot.len() != t * spec.n {
        return Err(Error::shape(format!(
            "frame adjoint cotangent has {} values, expected {}×{}",
            cot.len(),
            t,
            spec.n
        )));
    }
    let mut out = vec![T::zero(); len];
    for m in 0..t {
        for j in 0..spec.n {
            if let Some(i) = spec.source_index(len, m, j) {
                out[i] += cot[m * spec.n + j];
            }
        }
    }
    Ok(out)
}

/// Overlap-add `[t, n]` frames at `hop` into `[(t−1)·hop + n]` samples.
pub fn overlap_add<T: Scalar>(frames: &[T], t: usize, n: usize, hop: usize) -> Result<Vec<T>> {
    if t == 0 || frames.len() != t * n {
        return Err(Error::shape(format!(
            "overlap-add input has {} values, expected {t}×{n}",
            frames.len()
        )));
    }
    if hop == 0 || hop > n {
        return Err(Error::invalid(format!("hop must satisfy 0 < hop ≤ {n}, got {hop}")));
    }
    let out_len = (t - 1) * hop + n;
    let mut out = vec![T::zero(); out_len];
    for (p, o) in out.iter_mut().enumerate() {
        let m_lo = (p.saturating_sub(n - 1) + hop - 1) / hop;
        let m_hi = (p / hop).min(t - 1);
        let mut acc = T::zero();
        for m in m_lo..=m_hi {
            acc += frames[m * n + (p - m * hop)];
        }
        *o = acc;
    }
    Ok(out)
}

/// Adjoint of `overlap_add`: cotangent `[(t−1)·hop + n]` → `[t, n]` (a gather).
pub fn overlap_add_adjoint<T: Scalar>(cot: &[T], t: usize, n: usize, hop: usize) -> Result<Vec<T>> {
    let out_len = (t - 1) * hop + n;
    if cot.len() != out_len {
        return Err(Error::shape(format!(
            "overlap-add adjoint cotangent has {} values, expected {out_len}",
            cot.len()
        )));
    }
    let mut out = vec![T::zero(); t * n];
    for m in 0..t {
        for j in 0..n {
            out[m * n + j] = cot[m * hop + j];
        }
    }
    Ok(out)
}

/// Per-position sum of the squared synthesis window across overlapping frames,
/// floored at `floor`: the divisor that undoes windowed overlap-add exactly,
/// including the tapered first and last `n − hop` samples.
pub fn synthesis_envelope<T: Scalar>(window: &[T], t: usize, hop: usize, floor: T) -> Result<Vec<T>> {
    let n = window.len();
    if t == 0 {
        return Err(Error::invalid("envelope needs at least one frame"));
    }
    if hop == 0 || hop > n {
        return Err(Error::invalid(format!("hop must satisfy 0 < hop ≤ {n}, got {hop}")));
    }
    let out_len = (t - 1) * hop + n;
    let mut out = vec![T::zero(); out_len];
    for (p, o) in out.iter_mut().enumerate() {
        let m_lo = (p.saturating_sub(n - 1) + hop - 1) / hop;
        let m_hi = (p / hop).min(t - 1);
        let mut acc = T::zero();
        for m in m_lo..=m_hi {
            let w = window[p - m * hop];
            acc += w * w;
        }
        *o = acc.max(floor);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::PadMode;

    fn spec(n: usize, hop: usize, pad: PadMode) -> FrameSpec {
        FrameSpec { n, hop, pad }
    }

    #[test]
    fn frame_count_and_reflection_indices() {
        let s = spec(8, 4, PadMode::Reflect);
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(s.num_frames(x.len()), 3);
        let frames = frame_signal(&x, s).unwrap();
        // Frame 0 covers raw indices −4..4 → reflect to [4,3,2,1,0,1,2,3].
        assert_eq!(&frames[..8], &[4.0, 3.0, 2.0, 1.0, 0.0, 1.0, 2.0, 3.0]);
        // Frame 2 covers 4..12 → [4,5,6,7,8,9,8,7] (right edge reflects around 9).
        assert_eq!(&frames[16..], &[4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 8.0, 7.0]);
    }

    #[test]
    fn zero_padding_fills_edges() {
        let s = spec(8, 4, PadMode::Zero);
        let x: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let frames = frame_signal(&x, s).unwrap();
        assert_eq!(&frames[..8], &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn reflection_needs_enough_signal() {
        let s = spec(8, 4, PadMode::Reflect);
        assert!(frame_signal(&[1.0f64; 4], s).is_err());
        assert!(frame_signal(&[1.0f64; 5], s).is_ok());
    }

    #[test]
    fn overlap_add_matches_scatter_oracle() {
        // Oracle: scatter each frame at m·hop, iterating frames outermost.
        let (t, n, hop) = (5usize, 8usize, 3usize);
        let frames: Vec<f64> = (0..t * n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut oracle = vec![0.0; (t - 1) * hop + n];
        for m in 0..t {
            for j in 0..n {
                oracle[m * hop + j] += frames[m * n + j];
            }
        }
        let got = overlap_add(&frames, t, n, hop).unwrap();
        for (a, b) in got.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_and_overlap_add_adjoint_identities() {
        let len = 23;
        let s = spec(8, 4, PadMode::Reflect);
        let x: Vec<f64> = (0..len).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let t = s.num_frames(len);
        let y: Vec<f64> = (0..t * s.n).map(|i| ((i * 5 + 1) % 13) as f64 - 6.0).collect();

        let ax = frame_signal(&x, s).unwrap();
        let aty = frame_signal_adjoint(&y, len, s).unwrap();
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "frame adjoint");

        let (t, n, hop) = (4usize, 6usize, 2usize);
        let fr: Vec<f64> = (0..t * n).map(|i| (i as f64 * 1.3).cos()).collect();
        let g: Vec<f64> = (0..(t - 1) * hop + n).map(|i| (i as f64 * 0.9).sin()).collect();
        let bu = overlap_add(&fr, t, n, hop).unwrap();
        let btg = overlap_add_adjoint(&g, t, n, hop).unwrap();
        let lhs: f64 = bu.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = fr.iter().zip(&btg).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "overlap-add adjoint");
    }

    #[test]
    fn envelope_interior_equals_cola_constant_and_edges_taper() {
        let n = 1024;
        let hop = 256;
        let w: Vec<f64> = crate::dsp::window::hann_window(n).unwrap();
        let t = 12;
        let env = synthesis_envelope(&w, t, hop, 1e-8).unwrap();
        for (p, &e) in env.iter().enumerate() {
            if p >= n && p < env.len() - n {
                assert!((e - 1.5).abs() < 1e-9, "interior {p}: {e}");
            }
        }
        // The very first sample only sees w[0] = 0, so the floor kicks in.
        assert_eq!(env[0], 1e-8);
        assert!(env[hop] < 1.5);
    }
}
