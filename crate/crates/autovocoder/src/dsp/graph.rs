//! Differentiable STFT, iSTFT, and log-mel pipelines assembled from graph ops.
//!
//! These mirror the pure functions in the parent module exactly — same
//! framing, same window, same envelope division — but build autodiff nodes so
//! gradients flow from waveform-domain losses back through the transforms.
//! Batched layouts: waveforms are `[batch, len]`, spectral planes are
//! `[batch, bins, frames]` (frequency as image height, time as width).

use crate::autodiff::{Graph, NodeRef};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::frame::synthesis_envelope;
use super::mel::{MelFilterbank, LOG_MEL_FLOOR};
use super::{Head, StftConfig};

fn require_batched_wave<T: Scalar>(g: &Graph<T>, wave: NodeRef) -> Result<(usize, usize)> {
    let s = g.shape(wave);
    if s.len() != 2 {
        return Err(Error::shape(format!("expected [batch, len] waveform, got {s:?}")));
    }
    Ok((s[0], s[1]))
}

/// Windowed analysis frames: `[b, len] → [b, frames, n]`.
fn windowed_frames<T: Scalar>(
    g: &mut Graph<T>,
    wave: NodeRef,
    cfg: &StftConfig,
) -> Result<NodeRef> {
    cfg.validate()?;
    require_batched_wave(g, wave)?;
    let framed = g.frame(wave, cfg.frame_spec())?;
    let window = Tensor::from_vec(vec![cfg.window_size], cfg.window.build::<T>(cfg.window_size)?)?;
    let w = g.constant(window);
    g.mul(framed, w)
}

/// Real/imaginary STFT planes in `[b, frames, bins]` layout.
pub fn stft_re_im_tf<T: Scalar>(
    g: &mut Graph<T>,
    wave: NodeRef,
    cfg: &StftConfig,
) -> Result<(NodeRef, NodeRef)> {
    let (b, len) = require_batched_wave(g, wave)?;
    let t = cfg.num_frames(len);
    let f = cfg.freq_bins();
    let frames = windowed_frames(g, wave, cfg)?;
    let spec = g.rdft(frames)?; // [b, t, 2, f]
    let re = g.slice_axis(spec, 2, 0, 1)?;
    let re = g.reshape(re, vec![b, t, f])?;
    let im = g.slice_axis(spec, 2, 1, 1)?;
    let im = g.reshape(im, vec![b, t, f])?;
    Ok((re, im))
}

/// The four spectral channels `[magnitude, phase, real, imaginary]` stacked
/// as `[b, 4, bins, frames]` — the encoder's input image.
pub fn spectral_stack_nodes<T: Scalar>(
    g: &mut Graph<T>,
    wave: NodeRef,
    cfg: &StftConfig,
) -> Result<NodeRef> {
    let (b, len) = require_batched_wave(g, wave)?;
    let t = cfg.num_frames(len);
    let f = cfg.freq_bins();
    let (re_tf, im_tf) = stft_re_im_tf(g, wave, cfg)?;
    let re = g.permute(re_tf, &[0, 2, 1])?; // [b, f, t]
    let im = g.permute(im_tf, &[0, 2, 1])?;
    let re2 = g.square(re);
    let im2 = g.square(im);
    let power = g.add(re2, im2)?;
    let mag = g.sqrt(power);
    let phase = g.atan2(im, re)?;
    let planes = [mag, phase, re, im]
        .iter()
        .map(|&p| g.reshape(p, vec![b, 1, f, t]))
        .collect::<Result<Vec<_>>>()?;
    g.concat(&planes, 1)
}

/// Combine raw decoder channels `[b, c, bins, frames]` into real/imaginary
/// planes `[b, bins, frames]` according to `head`.
pub fn head_to_re_im<T: Scalar>(
    g: &mut Graph<T>,
    raw: NodeRef,
    head: Head,
) -> Result<(NodeRef, NodeRef)> {
    let s = g.shape(raw).to_vec();
    if s.len() != 4 || s[1] != head.channels() {
        return Err(Error::shape(format!(
            "head {} expects [b, {}, bins, frames], got {s:?}",
            head.name(),
            head.channels()
        )));
    }
    let (b, f, t) = (s[0], s[2], s[3]);
    let plane = |c: usize, g: &mut Graph<T>| -> Result<NodeRef> {
        let sl = g.slice_axis(raw, 1, c, 1)?;
        g.reshape(sl, vec![b, f, t])
    };
    match head {
        Head::Cartesian => {
            let re = plane(0, g)?;
            let im = plane(1, g)?;
            Ok((re, im))
        }
        Head::Polar => {
            let mag = plane(0, g)?;
            let ph = plane(1, g)?;
            let cos = g.cos(ph);
            let sin = g.sin(ph);
            let re = g.mul(mag, cos)?;
            let im = g.mul(mag, sin)?;
            Ok((re, im))
        }
        Head::Mean4 => {
            let mag = plane(0, g)?;
            let ph = plane(1, g)?;
            let re_c = plane(2, g)?;
            let im_c = plane(3, g)?;
            let cos = g.cos(ph);
            let sin = g.sin(ph);
            let re_p = g.mul(mag, cos)?;
            let im_p = g.mul(mag, sin)?;
            let half = T::of_f64(0.5);
            let re_sum = g.add(re_p, re_c)?;
            let im_sum = g.add(im_p, im_c)?;
            Ok((g.affine(re_sum, half, T::zero()), g.affine(im_sum, half, T::zero())))
        }
    }
}

/// Differentiable synthesis from `[b, bins, frames]` real/imaginary planes to
/// `[b, out_len]` waveforms: inverse DFT per frame, synthesis window,
/// overlap-add, division by the squared-window envelope, center crop.
pub fn istft_nodes<T: Scalar>(
    g: &mut Graph<T>,
    re: NodeRef,
    im: NodeRef,
    cfg: &StftConfig,
    out_len: usize,
) -> Result<NodeRef> {
    cfg.validate()?;
    let s = g.shape(re).to_vec();
    if s.len() != 3 || g.shape(im) != s.as_slice() {
        return Err(Error::shape(format!(
            "istft expects matching [b, bins, frames] planes, got {:?} and {:?}",
            s,
            g.shape(im)
        )));
    }
    let (b, f, t) = (s[0], s[1], s[2]);
    if f != cfg.freq_bins() {
        return Err(Error::shape(format!(
            "planes have {f} bins but window_size {} implies {}",
            cfg.window_size,
            cfg.freq_bins()
        )));
    }
    let n = cfg.window_size;
    let padded_len = (t - 1) * cfg.hop + n;
    if n / 2 + out_len > padded_len {
        return Err(Error::shape(format!(
            "{t} frames cover {} usable samples, cannot crop {out_len}",
            padded_len - n / 2
        )));
    }

    let re_tf = g.permute(re, &[0, 2, 1])?; // [b, t, f]
    let im_tf = g.permute(im, &[0, 2, 1])?;
    let re4 = g.reshape(re_tf, vec![b, t, 1, f])?;
    let im4 = g.reshape(im_tf, vec![b, t, 1, f])?;
    let spec = g.concat(&[re4, im4], 2)?; // [b, t, 2, f]
    let frames = g.irdft(spec)?; // [b, t, n]

    let window = cfg.window.build::<T>(n)?;
    let w = g.constant(Tensor::from_vec(vec![n], window.clone())?);
    let windowed = g.mul(frames, w)?;
    let acc = g.overlap_add(windowed, cfg.hop)?; // [b, padded_len]

    let env = synthesis_envelope(&window, t, cfg.hop, T::of_f64(1e-8))?;
    let inv_env: Vec<T> = env.iter().map(|&e| T::one() / e).collect();
    let inv = g.constant(Tensor::from_vec(vec![padded_len], inv_env)?);
    let normalized = g.mul(acc, inv)?;
    g.crop_last(normalized, n / 2, out_len)
}

/// `ln(max(mel(|STFT|), 1e-5))` as graph nodes: `[b, len] → [b, frames, n_mels]`.
pub fn log_mel_nodes<T: Scalar>(
    g: &mut Graph<T>,
    wave: NodeRef,
    cfg: &StftConfig,
    fb: &MelFilterbank<T>,
) -> Result<NodeRef> {
    if fb.bins() != cfg.freq_bins() {
        return Err(Error::shape(format!(
            "filterbank has {} bins but stft config implies {}",
            fb.bins(),
            cfg.freq_bins()
        )));
    }
    let (re, im) = stft_re_im_tf(g, wave, cfg)?; // [b, t, f]
    let re2 = g.square(re);
    let im2 = g.square(im);
    let power = g.add(re2, im2)?;
    let mag = g.sqrt(power);
    let weights = g.constant(fb.weights().clone());
    let mel = g.linear(mag, weights, None)?; // [b, t, n_mels]
    let clamped = g.clamp_min(mel, T::of_f64(LOG_MEL_FLOOR));
    Ok(g.ln(clamped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{self, Waveform};

    fn batch_of_two() -> (Tensor<f64>, StftConfig) {
        let cfg = StftConfig::new(32, 8);
        let len = 100;
        let mut data = Vec::new();
        for b in 0..2 {
            for i in 0..len {
                let t = i as f64;
                data.push(0.4 * (0.21 * t + b as f64).sin() + 0.1 * (0.05 * t).cos());
            }
        }
        (Tensor::from_vec(vec![2, len], data).unwrap(), cfg)
    }

    #[test]
    fn graph_stft_matches_pure_stft() {
        let (batch, cfg) = batch_of_two();
        let mut g = Graph::new();
        let wave = g.constant(batch.clone());
        let (re, im) = stft_re_im_tf(&mut g, wave, &cfg).unwrap();
        for b in 0..2 {
            let x = Waveform::new(batch.data()[b * 100..(b + 1) * 100].to_vec(), 8000).unwrap();
            let s = dsp::stft(&x, &cfg).unwrap();
            for m in 0..s.frames {
                for k in 0..s.bins {
                    let idx = (b * s.frames + m) * s.bins + k;
                    assert!((g.value(re).data()[idx] - s.get(m, k).re).abs() < 1e-9);
                    assert!((g.value(im).data()[idx] - s.get(m, k).im).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn graph_istft_inverts_graph_stft() {
        let (batch, cfg) = batch_of_two();
        let mut g = Graph::new();
        let wave = g.constant(batch.clone());
        let (re_tf, im_tf) = stft_re_im_tf(&mut g, wave, &cfg).unwrap();
        let re = g.permute(re_tf, &[0, 2, 1]).unwrap();
        let im = g.permute(im_tf, &[0, 2, 1]).unwrap();
        let back = istft_nodes(&mut g, re, im, &cfg, 100).unwrap();
        assert_eq!(g.shape(back), &[2, 100]);
        for (a, b) in g.value(back).data().iter().zip(batch.data()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn spectral_stack_layout_is_channels_bins_frames() {
        let (batch, cfg) = batch_of_two();
        let mut g = Graph::new();
        let wave = g.constant(batch.clone());
        let stack = spectral_stack_nodes(&mut g, wave, &cfg).unwrap();
        let t = cfg.num_frames(100);
        let f = cfg.freq_bins();
        assert_eq!(g.shape(stack), &[2, 4, f, t]);

        // Channel 0 is the magnitude; compare one entry against the pure path.
        let x = Waveform::new(batch.data()[..100].to_vec(), 8000).unwrap();
        let s = dsp::stft(&x, &cfg).unwrap();
        let mag = s.magnitude();
        let (m, k) = (3usize, 5usize);
        let got = g.value(stack).data()[(k * t) + m]; // b=0, c=0
        assert!((got - mag.data()[m * f + k]).abs() < 1e-9);
    }

    #[test]
    fn cartesian_head_round_trips_stack_planes() {
        let (batch, cfg) = batch_of_two();
        let mut g = Graph::new();
        let wave = g.constant(batch);
        let stack = spectral_stack_nodes(&mut g, wave, &cfg).unwrap();
        // Channels 2..4 of the stack are [re, im]; mean4 over the full stack
        // must equal the cartesian head over those two.
        let s = g.shape(stack).to_vec();
        let re_im = g.slice_axis(stack, 1, 2, 2).unwrap();
        let (re_a, im_a) = head_to_re_im(&mut g, re_im, Head::Cartesian).unwrap();
        let (re_b, im_b) = head_to_re_im(&mut g, stack, Head::Mean4).unwrap();
        assert_eq!(g.shape(re_a), &[s[0], s[2], s[3]]);
        for (a, b) in g.value(re_a).data().iter().zip(g.value(re_b).data()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in g.value(im_a).data().iter().zip(g.value(im_b).data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn graph_log_mel_matches_pure_log_mel() {
        let (batch, cfg) = batch_of_two();
        let fb = MelFilterbank::<f64>::new(6, cfg.freq_bins(), 8000, 0.0, 4000.0).unwrap();
        let mut g = Graph::new();
        let wave = g.constant(batch.clone());
        let lm = log_mel_nodes(&mut g, wave, &cfg, &fb).unwrap();
        let x = Waveform::new(batch.data()[..100].to_vec(), 8000).unwrap();
        let pure = dsp::mel::log_mel_spectrogram(&x, &cfg, &fb).unwrap();
        for i in 0..pure.data().len() {
            assert!((g.value(lm).data()[i] - pure.data()[i]).abs() < 1e-9);
        }
    }
}
