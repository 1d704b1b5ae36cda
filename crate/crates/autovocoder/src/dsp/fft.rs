//! Real DFT kernels and their adjoint maps.
//!
//! Conventions, shared by everything downstream:
//! - forward transform is unnormalized: `X_k = Σ_n x_n e^{−2πikn/N}`;
//! - inverse carries the full `1/N`;
//! - a length-`n` real row transforms to `f = n/2 + 1` complex bins,
//!   stored as two planes `[re..., im...]` of length `f` each.
//!
//! The adjoints are the transposes of these real-linear maps, used by the
//! differentiable ops:
//! - `rdft` adjoint of a cotangent `(u, v)`: `Re(Σ_k (u_k + i·v_k) e^{+2πikn/N})`
//!   with the cotangent zero-padded to all `n` bins, i.e. an unnormalized
//!   inverse FFT restricted to its real part.
//! - `irdft` adjoint of a cotangent `g`: with `G = Σ_n g_n e^{−2πikn/N}`,
//!   `∂/∂Re X_k = (c_k/n)·Re G_k` and `∂/∂Im X_k = (c_k/n)·Im G_k`, where
//!   `c_k = 1` for the DC and Nyquist bins and `2` otherwise (those two bins
//!   appear once in the Hermitian extension, every other bin twice; the
//!   imaginary parts of DC/Nyquist never reach the output and `Im G` vanishes
//!   there, so the same formula covers them).

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::scalar::Scalar;

/// Number of stored complex bins for a length-`n` real transform.
pub fn freq_bins(n: usize) -> usize {
    n / 2 + 1
}

/// Forward and inverse plans for one transform length.
pub struct RealDft<T: Scalar> {
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> RealDft<T> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n % 2 == 0, "transform length must be even, ≥ 2");
        let mut planner = FftPlanner::new();
        RealDft {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn bins(&self) -> usize {
        freq_bins(self.n)
    }

    /// `rows` real rows of length `n` → `rows` rows of `[2, f]` (re plane, im plane).
    pub fn rdft_rows(&self, input: &[T], rows: usize) -> Vec<T> {
        let (n, f) = (self.n, self.bins());
        assert_eq!(input.len(), rows * n);
        let mut out = vec![T::zero(); rows * 2 * f];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for r in 0..rows {
            for (b, &x) in buf.iter_mut().zip(&input[r * n..(r + 1) * n]) {
                *b = Complex::new(x, T::zero());
            }
            self.forward.process(&mut buf);
            let row = &mut out[r * 2 * f..(r + 1) * 2 * f];
            for k in 0..f {
                row[k] = buf[k].re;
                row[f + k] = buf[k].im;
            }
        }
        out
    }

    /// Adjoint of `rdft_rows`: cotangent rows of `[2, f]` → real rows of length `n`.
    pub fn rdft_adjoint_rows(&self, cot: &[T], rows: usize) -> Vec<T> {
        let (n, f) = (self.n, self.bins());
        assert_eq!(cot.len(), rows * 2 * f);
        let mut out = vec![T::zero(); rows * n];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for r in 0..rows {
            let row = &cot[r * 2 * f..(r + 1) * 2 * f];
            for (k, b) in buf.iter_mut().enumerate() {
                *b = if k < f {
                    Complex::new(row[k], row[f + k])
                } else {
                    Complex::new(T::zero(), T::zero())
                };
            }
            self.inverse.process(&mut buf); // unnormalized
            for (o, b) in out[r * n..(r + 1) * n].iter_mut().zip(&buf) {
                *o = b.re;
            }
        }
        out
    }

    /// Hermitian inverse: rows of `[2, f]` → real rows of length `n`, with `1/n`.
    ///
    /// Only the real parts of the DC and Nyquist bins influence the output;
    /// their imaginary parts are ignored, matching the adjoint above.
    pub fn irdft_rows(&self, input: &[T], rows: usize) -> Vec<T> {
        let (n, f) = (self.n, self.bins());
        assert_eq!(input.len(), rows * 2 * f);
        let inv_n = T::one() / T::of_usize(n);
        let mut out = vec![T::zero(); rows * n];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for r in 0..rows {
            let row = &input[r * 2 * f..(r + 1) * 2 * f];
            for (k, b) in buf.iter_mut().enumerate() {
                *b = if k < f {
                    Complex::new(row[k], row[f + k])
                } else {
                    // Hermitian extension of the stored half-spectrum.
                    Complex::new(row[n - k], -row[f + n - k])
                };
            }
            self.inverse.process(&mut buf);
            for (o, b) in out[r * n..(r + 1) * n].iter_mut().zip(&buf) {
                *o = b.re * inv_n;
            }
        }
        out
    }

    /// Adjoint of `irdft_rows`: real cotangent rows → rows of `[2, f]`.
    pub fn irdft_adjoint_rows(&self, cot: &[T], rows: usize) -> Vec<T> {
        let (n, f) = (self.n, self.bins());
        assert_eq!(cot.len(), rows * n);
        let inv_n = T::one() / T::of_usize(n);
        let two = T::of_f64(2.0);
        let mut out = vec![T::zero(); rows * 2 * f];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for r in 0..rows {
            for (b, &g) in buf.iter_mut().zip(&cot[r * n..(r + 1) * n]) {
                *b = Complex::new(g, T::zero());
            }
            self.forward.process(&mut buf);
            let row = &mut out[r * 2 * f..(r + 1) * 2 * f];
            for k in 0..f {
                let c = if k == 0 || k == f - 1 { inv_n } else { two * inv_n };
                row[k] = c * buf[k].re;
                row[f + k] = c * buf[k].im;
            }
        }
        out
    }
}
