//! Binary portable-graymap (P5) emission for spectrogram-like grids.

use std::path::Path;

use autovocoder::{Error, Result};

/// Write a `[frames, bins]` grid as a P5 image: time on the x-axis, bin 0 on
/// the bottom row, values min-max normalized to 0–255. A constant grid (for
/// example the spectrogram of silence) renders uniformly black.
pub fn write_pgm(path: &Path, frames: usize, bins: usize, values: &[f32]) -> Result<()> {
    if frames == 0 || bins == 0 || values.len() != frames * bins {
        return Err(Error::shape(format!(
            "grid {frames}×{bins} does not match {} values",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("grid contains non-finite values"));
    }
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;

    let mut out = format!("P5\n{frames} {bins}\n255\n").into_bytes();
    out.reserve(frames * bins);
    for row in 0..bins {
        let bin = bins - 1 - row;
        for frame in 0..frames {
            let v = values[frame * bins + bin];
            let g = if range > 0.0 { ((v - lo) / range * 255.0).round() as u8 } else { 0 };
            out.push(g);
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(path: &Path) -> (usize, usize, Vec<u8>) {
        let bytes = std::fs::read(path).unwrap();
        let header_end = bytes
            .windows(1)
            .enumerate()
            .filter(|(_, w)| w[0] == b'\n')
            .map(|(i, _)| i)
            .nth(2)
            .unwrap();
        let header = std::str::from_utf8(&bytes[..header_end]).unwrap();
        let mut lines = header.lines();
        assert_eq!(lines.next(), Some("P5"));
        let mut dims = lines.next().unwrap().split_whitespace();
        let w: usize = dims.next().unwrap().parse().unwrap();
        let h: usize = dims.next().unwrap().parse().unwrap();
        assert_eq!(lines.next(), Some("255"));
        (w, h, bytes[header_end + 1..].to_vec())
    }

    #[test]
    fn dimensions_orientation_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgm");
        // 2 frames × 3 bins; frame 0 holds the extremes.
        let values = [0.0f32, 0.5, 1.0, 0.25, 0.25, 0.25];
        write_pgm(&path, 2, 3, &values).unwrap();
        let (w, h, pixels) = read(&path);
        assert_eq!((w, h), (2, 3));
        assert_eq!(pixels.len(), 6);
        // Top row = highest bin: frame 0 bin 2 = 1.0 → 255.
        assert_eq!(pixels[0], 255);
        // Bottom row = bin 0: frame 0 → 0.
        assert_eq!(pixels[4], 0);
        // Frame 1 is constant 0.25 → (0.25 / 1.0) · 255 ≈ 64 everywhere.
        assert_eq!(pixels[1], 64);
        assert_eq!(pixels[3], 64);
        assert_eq!(pixels[5], 64);
    }

    #[test]
    fn constant_grid_is_uniform() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.pgm");
        write_pgm(&path, 4, 2, &[7.0; 8]).unwrap();
        let (_, _, pixels) = read(&path);
        assert!(pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn bad_grids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        assert!(write_pgm(&path, 2, 2, &[1.0; 3]).is_err());
        assert!(write_pgm(&path, 0, 2, &[]).is_err());
        assert!(write_pgm(&path, 1, 2, &[f32::NAN, 0.0]).is_err());
    }
}
