//! Spectral processing: STFT analysis/synthesis, spectral stacks, mel
//! filterbanks, and Griffin-Lim phase reconstruction.
//!
//! One STFT convention is used everywhere: centered frames with reflect
//! padding, periodic Hann analysis and synthesis windows, unnormalized
//! forward DFT, `1/N` on the inverse, and synthesis by windowed overlap-add
//! divided by the per-position sum of squared windows.

pub mod fft;
pub mod frame;
pub mod graph;
pub mod griffin_lim;
pub mod mel;
pub mod window;

pub use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use fft::RealDft;
use frame::FrameSpec;

/// How indices outside the signal are produced when framing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Reflect,
    Zero,
}

impl PadMode {
    pub fn name(self) -> &'static str {
        match self {
            PadMode::Reflect => "reflect",
            PadMode::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "reflect" => Ok(PadMode::Reflect),
            "zero" => Ok(PadMode::Zero),
            other => Err(Error::Config(format!("unknown pad mode: {other}"))),
        }
    }
}

/// Analysis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
}

impl WindowKind {
    pub fn build<T: Scalar>(self, n: usize) -> Result<Vec<T>> {
        match self {
            WindowKind::Hann => window::hann_window(n),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Hann => "hann",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(WindowKind::Hann),
            other => Err(Error::Config(format!("unknown window kind: {other}"))),
        }
    }
}

/// STFT geometry shared by analysis, synthesis, and the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub pad: PadMode,
}

impl StftConfig {
    /// Hann window, reflect padding.
    pub fn new(window_size: usize, hop: usize) -> Self {
        StftConfig { window_size, hop, window: WindowKind::Hann, pad: PadMode::Reflect }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 || self.window_size % 2 != 0 {
            return Err(Error::invalid(format!(
                "window_size must be even and ≥ 2, got {}",
                self.window_size
            )));
        }
        if self.hop == 0 || self.hop > self.window_size {
            return Err(Error::invalid(format!(
                "hop must satisfy 0 < hop ≤ {}, got {}",
                self.window_size, self.hop
            )));
        }
        Ok(())
    }

    /// Stored frequency bins: `window_size/2 + 1`.
    pub fn freq_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    /// Frame count for a signal of `len` samples: `len/hop + 1`.
    pub fn num_frames(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    pub fn frame_spec(&self) -> FrameSpec {
        FrameSpec { n: self.window_size, hop: self.hop, pad: self.pad }
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig::new(1024, 256)
    }
}

/// A mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [T] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn cast<U: Scalar>(&self) -> Waveform<U> {
        Waveform {
            samples: self.samples.iter().map(|v| U::of_f64(v.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Complex STFT values, row-major `[frames, bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram<T> {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexSpectrogram<T> {
    pub fn new(frames: usize, bins: usize, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != frames * bins {
            return Err(Error::shape(format!(
                "spectrogram has {} values, expected {frames}×{bins}",
                values.len()
            )));
        }
        Ok(ComplexSpectrogram { frames, bins, values })
    }

    pub fn get(&self, frame: usize, bin: usize) -> Complex<T> {
        self.values[frame * self.bins + bin]
    }

    /// `[frames, bins]` magnitudes.
    pub fn magnitude(&self) -> Tensor<T> {
        let data = self.values.iter().map(|c| (c.re * c.re + c.im * c.im).sqrt()).collect();
        Tensor::from_vec(vec![self.frames, self.bins], data).expect("magnitude shape")
    }

    /// `[frames, bins]` phases; zero-magnitude bins get phase 0.
    pub fn phase(&self) -> Tensor<T> {
        let data = self
            .values
            .iter()
            .map(|c| if c.re.is_zero() && c.im.is_zero() { T::zero() } else { c.im.atan2(c.re) })
            .collect();
        Tensor::from_vec(vec![self.frames, self.bins], data).expect("phase shape")
    }
}

/// Assemble a spectrogram from `[frames, bins]` magnitude and phase grids.
pub fn polar_spectrogram<T: Scalar>(mag: &Tensor<T>, phase: &Tensor<T>) -> Result<ComplexSpectrogram<T>> {
    let (frames, bins) = grid_dims("polar spectrogram", mag)?;
    if phase.shape() != mag.shape() {
        return Err(Error::shape(format!(
            "magnitude shape {:?} and phase shape {:?} differ",
            mag.shape(),
            phase.shape()
        )));
    }
    let values = mag
        .data()
        .iter()
        .zip(phase.data())
        .map(|(&m, &p)| Complex::new(m * p.cos(), m * p.sin()))
        .collect();
    ComplexSpectrogram::new(frames, bins, values)
}

fn grid_dims<T: Scalar>(what: &str, t: &Tensor<T>) -> Result<(usize, usize)> {
    if t.ndim() != 2 {
        return Err(Error::shape(format!("{what} must be 2-D, got shape {:?}", t.shape())));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// The four real views of a spectrogram, each `[frames, bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralStack<T> {
    pub frames: usize,
    pub bins: usize,
    pub magnitude: Tensor<T>,
    pub phase: Tensor<T>,
    pub real: Tensor<T>,
    pub imag: Tensor<T>,
}

/// Expand a spectrogram into its `[magnitude, phase, real, imaginary]` planes.
pub fn complex_to_stack<T: Scalar>(s: &ComplexSpectrogram<T>) -> SpectralStack<T> {
    let shape = vec![s.frames, s.bins];
    let real: Vec<T> = s.values.iter().map(|c| c.re).collect();
    let imag: Vec<T> = s.values.iter().map(|c| c.im).collect();
    SpectralStack {
        frames: s.frames,
        bins: s.bins,
        magnitude: s.magnitude(),
        phase: s.phase(),
        real: Tensor::from_vec(shape.clone(), real).expect("stack shape"),
        imag: Tensor::from_vec(shape, imag).expect("stack shape"),
    }
}

/// How raw decoder channels combine into one complex spectrogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Channels `[re, im]`.
    Cartesian,
    /// Channels `[mag, phase]`.
    Polar,
    /// Channels `[mag, phase, re, im]`, combined as the Cartesian mean of
    /// the polar-form and Cartesian-form complex values.
    Mean4,
}

impl Head {
    pub fn channels(self) -> usize {
        match self {
            Head::Cartesian | Head::Polar => 2,
            Head::Mean4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Cartesian => "cartesian",
            Head::Polar => "polar",
            Head::Mean4 => "mean4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cartesian" => Ok(Head::Cartesian),
            "polar" => Ok(Head::Polar),
            "mean4" => Ok(Head::Mean4),
            other => Err(Error::Config(format!("unknown head: {other}"))),
        }
    }
}

/// Combine raw `[frames, bins]` channel grids into a complex spectrogram
/// according to `head`. Expects exactly `head.channels()` grids in the channel
/// order documented on [`Head`].
pub fn stack_to_complex<T: Scalar>(planes: &[&Tensor<T>], head: Head) -> Result<ComplexSpectrogram<T>> {
    if planes.len() != head.channels() {
        return Err(Error::shape(format!(
            "head {} expects {} channels, got {}",
            head.name(),
            head.channels(),
            planes.len()
        )));
    }
    let (frames, bins) = grid_dims("stack channel", planes[0])?;
    for p in planes {
        if p.shape() != planes[0].shape() {
            return Err(Error::shape("stack channels must share one shape"));
        }
    }
    let len = frames * bins;
    let mut values = Vec::with_capacity(len);
    match head {
        Head::Cartesian => {
            let (re, im) = (planes[0].data(), planes[1].data());
            for i in 0..len {
                values.push(Complex::new(re[i], im[i]));
            }
        }
        Head::Polar => {
            let (mag, ph) = (planes[0].data(), planes[1].data());
            for i in 0..len {
                values.push(Complex::new(mag[i] * ph[i].cos(), mag[i] * ph[i].sin()));
            }
        }
        Head::Mean4 => {
            let half = T::of_f64(0.5);
            let (mag, ph, re, im) =
                (planes[0].data(), planes[1].data(), planes[2].data(), planes[3].data());
            for i in 0..len {
                values.push(Complex::new(
                    half * (mag[i] * ph[i].cos() + re[i]),
                    half * (mag[i] * ph[i].sin() + im[i]),
                ));
            }
        }
    }
    ComplexSpectrogram::new(frames, bins, values)
}

/// Centered STFT with `len/hop + 1` frames.
pub fn stft<T: Scalar>(x: &Waveform<T>, cfg: &StftConfig) -> Result<ComplexSpectrogram<T>> {
    cfg.validate()?;
    let n = cfg.window_size;
    let f = cfg.freq_bins();
    let w = cfg.window.build::<T>(n)?;
    let mut frames = frame::frame_signal(x.samples(), cfg.frame_spec())?;
    let t = cfg.num_frames(x.len());
    for m in 0..t {
        for (j, &wv) in w.iter().enumerate() {
            frames[m * n + j] *= wv;
        }
    }
    let dft = RealDft::new(n);
    let spec = dft.rdft_rows(&frames, t);
    let mut values = Vec::with_capacity(t * f);
    for m in 0..t {
        let row = &spec[m * 2 * f..(m + 1) * 2 * f];
        for k in 0..f {
            values.push(Complex::new(row[k], row[f + k]));
        }
    }
    ComplexSpectrogram::new(t, f, values)
}

/// Windowed overlap-add synthesis, cropped to `out_len` samples.
///
/// The overlap-added signal is divided by the actual per-position sum of
/// squared synthesis windows (floored at 1e-8), which undoes the analysis
/// windows exactly — including the tapered positions near the crop edges —
/// then the centering pad of `window_size/2` samples is removed.
pub fn istft<T: Scalar>(
    s: &ComplexSpectrogram<T>,
    cfg: &StftConfig,
    out_len: usize,
    sample_rate: u32,
) -> Result<Waveform<T>> {
    cfg.validate()?;
    let n = cfg.window_size;
    if s.bins != cfg.freq_bins() {
        return Err(Error::shape(format!(
            "spectrogram has {} bins but window_size {} implies {}",
            s.bins,
            n,
            cfg.freq_bins()
        )));
    }
    if s.frames == 0 {
        return Err(Error::invalid("cannot synthesize from zero frames"));
    }
    let t = s.frames;
    let f = s.bins;
    let padded_len = (t - 1) * cfg.hop + n;
    if n / 2 + out_len > padded_len {
        return Err(Error::shape(format!(
            "{t} frames cover {} usable samples, cannot crop {out_len}",
            padded_len - n / 2
        )));
    }

    let mut planes = vec![T::zero(); t * 2 * f];
    for m in 0..t {
        let row = &mut planes[m * 2 * f..(m + 1) * 2 * f];
        for k in 0..f {
            let c = s.values[m * f + k];
            row[k] = c.re;
            row[f + k] = c.im;
        }
    }
    let dft = RealDft::new(n);
    let mut frames = dft.irdft_rows(&planes, t);

    let w = cfg.window.build::<T>(n)?;
    for m in 0..t {
        for (j, &wv) in w.iter().enumerate() {
            frames[m * n + j] *= wv;
        }
    }
    let mut acc = frame::overlap_add(&frames, t, n, cfg.hop)?;
    let env = frame::synthesis_envelope(&w, t, cfg.hop, T::of_f64(1e-8))?;
    for (a, e) in acc.iter_mut().zip(&env) {
        *a /= *e;
    }
    let samples = acc[n / 2..n / 2 + out_len].to_vec();
    Waveform::new(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chirp(len: usize, sr: u32) -> Waveform<f64> {
        let samples = (0..len)
            .map(|i| {
                let t = i as f64 / sr as f64;
                0.4 * (2.0 * std::f64::consts::PI * (200.0 + 800.0 * t) * t).sin()
            })
            .collect();
        Waveform::new(samples, sr).unwrap()
    }

    #[test]
    fn stft_shape_follows_hop_arithmetic() {
        let cfg = StftConfig::default();
        let x = chirp(22050, 22050);
        let s = stft(&x, &cfg).unwrap();
        assert_eq!(s.frames, 22050 / 256 + 1);
        assert_eq!(s.bins, 513);
    }

    #[test]
    fn istft_inverts_stft_over_full_output() {
        let cfg = StftConfig::default();
        for len in [1024usize, 5000, 22050] {
            let x = chirp(len, 22050);
            let s = stft(&x, &cfg).unwrap();
            let y = istft(&s, &cfg, len, 22050).unwrap();
            let mut worst = 0.0f64;
            for (a, b) in x.samples().iter().zip(y.samples()) {
                worst = worst.max((a - b).abs());
            }
            assert!(worst < 1e-9, "len {len}: worst {worst}");
        }
    }

    #[test]
    fn istft_rejects_overlong_crop() {
        let cfg = StftConfig::default();
        let x = chirp(4096, 22050);
        let s = stft(&x, &cfg).unwrap();
        assert!(istft(&s, &cfg, 4096, 22050).is_ok());
        let max_ok = (s.frames - 1) * cfg.hop + cfg.window_size / 2;
        assert!(istft(&s, &cfg, max_ok, 22050).is_ok());
        assert!(istft(&s, &cfg, max_ok + 1, 22050).is_err());
    }

    #[test]
    fn stft_is_linear() {
        let cfg = StftConfig::new(64, 16);
        let a = chirp(400, 8000);
        let b = {
            let samples = (0..400).map(|i| ((i * 31 + 7) % 17) as f64 / 17.0 - 0.5).collect();
            Waveform::new(samples, 8000).unwrap()
        };
        let sum = Waveform::new(
            a.samples().iter().zip(b.samples()).map(|(x, y)| 2.0 * x + 0.5 * y).collect(),
            8000,
        )
        .unwrap();
        let (sa, sb, ss) =
            (stft(&a, &cfg).unwrap(), stft(&b, &cfg).unwrap(), stft(&sum, &cfg).unwrap());
        for i in 0..ss.values.len() {
            let expect = 2.0 * sa.values[i] + 0.5 * sb.values[i];
            assert!((ss.values[i] - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn phase_is_zero_at_zero_magnitude() {
        let s = ComplexSpectrogram::new(
            1,
            3,
            vec![
                Complex::new(0.0f64, 0.0),
                Complex::new(-1.0, 0.0),
                Complex::new(0.0, 2.0),
            ],
        )
        .unwrap();
        let p = s.phase();
        assert_eq!(p.data()[0], 0.0);
        assert!((p.data()[1] - std::f64::consts::PI).abs() < 1e-12);
        assert!((p.data()[2] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn stack_round_trips_through_every_head() {
        let cfg = StftConfig::new(64, 16);
        let x = chirp(500, 8000);
        let s = stft(&x, &cfg).unwrap();
        let stack = complex_to_stack(&s);

        let cart = stack_to_complex(&[&stack.real, &stack.imag], Head::Cartesian).unwrap();
        let polar = stack_to_complex(&[&stack.magnitude, &stack.phase], Head::Polar).unwrap();
        let mean4 = stack_to_complex(
            &[&stack.magnitude, &stack.phase, &stack.real, &stack.imag],
            Head::Mean4,
        )
        .unwrap();
        for i in 0..s.values.len() {
            assert!((cart.values[i] - s.values[i]).norm() < 1e-12);
            assert!((polar.values[i] - s.values[i]).norm() < 1e-9);
            assert!((mean4.values[i] - s.values[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn stack_channel_count_is_checked() {
        let g = Tensor::<f64>::zeros(vec![2, 3]);
        assert!(stack_to_complex(&[&g, &g, &g], Head::Cartesian).is_err());
        assert!(stack_to_complex(&[&g, &g], Head::Mean4).is_err());
    }
}
