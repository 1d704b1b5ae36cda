//! Analysis windows and overlap-add constants.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::StftConfig;

/// Periodic Hann window, `w[i] = 0.5·(1 − cos(2πi/n))`.
pub fn hann_window<T: Scalar>(n: usize) -> Result<Vec<T>> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::invalid(format!(
            "hann window length must be even and ≥ 2, got {n}"
        )));
    }
    let half = T::of_f64(0.5);
    let step = T::TAU() / T::of_usize(n);
    Ok((0..n)
        .map(|i| half * (T::one() - (step * T::of_usize(i)).cos()))
        .collect())
}

/// Value of `Σ_m w[i − m·hop]` (or the same sum of `w²` when `squared`)
/// over interior samples, verified constant to 1e-6 relative.
///
/// A window/hop pair whose shifted sum is not constant cannot be inverted
/// by plain overlap-add division, so a varying sum is reported as an error.
pub fn cola_constant<T: Scalar>(cfg: &StftConfig, squared: bool) -> Result<T> {
    cfg.validate()?;
    let n = cfg.window_size;
    let hop = cfg.hop;
    let mut w = cfg.window.build::<T>(n)?;
    if squared {
        for v in &mut w {
            *v = *v * *v;
        }
    }

    // Sum shifted windows over a span long enough that [n, span − n)
    // contains ≥ 4n fully covered samples.
    let span = 6 * n;
    let mut acc = vec![T::zero(); span];
    let mut m = 0usize;
    while m * hop < span {
        let start = m * hop;
        for (i, &v) in w.iter().enumerate() {
            if start + i < span {
                acc[start + i] += v;
            }
        }
        m += 1;
    }

    let interior = &acc[n..span - n];
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for &v in interior {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let scale = hi.abs().max(T::one());
    if (hi - lo) / scale > T::of_f64(1e-6) {
        return Err(Error::ColaViolation(format!(
            "overlap sum varies in [{}, {}] for window_size={n}, hop={hop}, squared={squared}",
            lo.as_f64(),
            hi.as_f64()
        )));
    }
    Ok((hi + lo) * T::of_f64(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::StftConfig;

    #[test]
    fn hann_closed_forms() {
        let w: Vec<f64> = hann_window(4).unwrap();
        for (a, b) in w.iter().zip([0.0, 0.5, 1.0, 0.5]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let w2: Vec<f64> = hann_window(2).unwrap();
        assert!((w2[0] - 0.0).abs() < 1e-12 && (w2[1] - 1.0).abs() < 1e-12);

        let w1024: Vec<f64> = hann_window(1024).unwrap();
        assert!((w1024[512] - 1.0).abs() < 1e-12);
        assert!(w1024[0].abs() < 1e-12);
        assert!(w1024.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn hann_rejects_odd_and_tiny() {
        assert!(hann_window::<f64>(3).is_err());
        assert!(hann_window::<f64>(1).is_err());
        assert!(hann_window::<f64>(0).is_err());
    }

    // Oracle: direct sum of shifted (squared) windows over interior samples,
    // written independently of cola_constant.
    fn direct_overlap_sum(n: usize, hop: usize, squared: bool) -> (f64, f64) {
        let w: Vec<f64> = hann_window(n).unwrap();
        let span = 10 * n;
        let mut acc = vec![0.0; span];
        for m in 0..(span / hop + 1) {
            for i in 0..n {
                let p = m * hop + i;
                if p < span {
                    acc[p] += if squared { w[i] * w[i] } else { w[i] };
                }
            }
        }
        let interior = &acc[2 * n..span - 2 * n];
        let lo = interior.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = interior.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    #[test]
    fn cola_matches_direct_sums() {
        for (n, hop, squared, expect) in [
            (1024usize, 256usize, false, 2.0f64),
            (1024, 256, true, 1.5),
            (1024, 512, false, 1.0),
        ] {
            let (lo, hi) = direct_overlap_sum(n, hop, squared);
            assert!((lo - expect).abs() < 1e-9 && (hi - expect).abs() < 1e-9);

            let cfg = StftConfig::new(n, hop);
            let got: f64 = cola_constant(&cfg, squared).unwrap();
            assert!((got - expect).abs() < 1e-9, "got {got}, expect {expect}");
        }
    }

    #[test]
    fn cola_violation_reported() {
        let cfg = StftConfig::new(1024, 300);
        match cola_constant::<f64>(&cfg, false) {
            Err(crate::error::Error::ColaViolation(_)) => {}
            other => panic!("expected cola violation, got {other:?}"),
        }
    }
}
