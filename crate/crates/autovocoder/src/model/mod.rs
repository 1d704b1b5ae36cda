//! The autovocoder: a waveform autoencoder whose encoder and decoder wrap
//! fixed STFT analysis/synthesis around small residual convolutional stacks.
//!
//! Encoder: waveform → STFT → `[magnitude, phase, real, imag]` channels as a
//! `[b, 4, bins, frames]` image → eleven basic blocks (five 4→4, one 4→1,
//! five 1→1) → per-frame linear `bins → dim` → embedding dropout.
//!
//! Decoder mirrors it: linear `dim → bins` → eleven blocks (five 1→1, one
//! 1→4, five 4→4) → a linear-activation 1×1 convolution producing the output
//! head's channels → head combination into a complex spectrogram → iSTFT.
//! There is no autoregression anywhere; synthesis is one batched pass.

pub mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Bind, Graph, NodeRef, Param};
use crate::dsp::graph::{head_to_re_im, istft_nodes, spectral_stack_nodes};
use crate::dsp::{Head, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use layers::{BasicBlock, Conv2dLayer, LinearLayer};

/// Channel plan for the encoder's block stack.
const ENCODER_PLAN: [(usize, usize); 11] =
    [(4, 4), (4, 4), (4, 4), (4, 4), (4, 4), (4, 1), (1, 1), (1, 1), (1, 1), (1, 1), (1, 1)];

/// The decoder mirrors the encoder plan.
const DECODER_PLAN: [(usize, usize); 11] =
    [(1, 1), (1, 1), (1, 1), (1, 1), (1, 1), (1, 4), (4, 4), (4, 4), (4, 4), (4, 4), (4, 4)];

/// Hyperparameters fixed at model construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub stft: StftConfig,
    pub sample_rate: u32,
    /// Width of the per-frame embedding (the "representation").
    pub representation_dim: usize,
    pub head: Head,
    /// Dropout probability applied to the embedding during training.
    pub embedding_dropout: f64,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            sample_rate: 22_050,
            representation_dim: 128,
            head: Head::Cartesian,
            embedding_dropout: 0.1,
            seed: 1234,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be nonzero"));
        }
        if self.representation_dim == 0 {
            return Err(Error::invalid("representation_dim must be nonzero"));
        }
        if !(0.0..=1.0).contains(&self.embedding_dropout) {
            return Err(Error::invalid(format!(
                "embedding_dropout {} outside [0, 1]",
                self.embedding_dropout
            )));
        }
        Ok(())
    }

    /// Fixed gain mapping spectral features into the network's O(1) operating
    /// range: a unit sinusoid's peak STFT magnitude under a Hann window is
    /// about `N/4`, so magnitude/real/imag channels are divided by this on the
    /// way in and multiplied back on the way out. Without it the output
    /// convolution would have to grow its weights by two orders of magnitude
    /// before the iSTFT sees full-scale spectra. Phase channels are raw
    /// radians and are never scaled.
    pub fn spectral_scale(&self) -> f64 {
        self.stft.window_size as f64 / 4.0
    }
}

/// A per-frame embedding sequence, shape `[frames, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent<T: Scalar> {
    values: Tensor<T>,
}

impl<T: Scalar> Latent<T> {
    pub fn new(values: Tensor<T>) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(Error::shape(format!(
                "latent must be [frames, dim], got {:?}",
                values.shape()
            )));
        }
        Ok(Self { values })
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn values(&self) -> &Tensor<T> {
        &self.values
    }

    pub fn into_values(self) -> Tensor<T> {
        self.values
    }
}

struct Encoder<T: Scalar> {
    blocks: Vec<BasicBlock<T>>,
    proj: LinearLayer<T>,
}

struct Decoder<T: Scalar> {
    proj: LinearLayer<T>,
    blocks: Vec<BasicBlock<T>>,
    out: Conv2dLayer<T>,
}

/// Complete encoder/decoder pair with its configuration.
pub struct Autovocoder<T: Scalar> {
    cfg: ModelConfig,
    encoder: Encoder<T>,
    decoder: Decoder<T>,
}

impl<T: Scalar> Autovocoder<T> {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bins = cfg.stft.freq_bins();
        let dim = cfg.representation_dim;

        let mut enc_blocks = Vec::with_capacity(ENCODER_PLAN.len());
        for (i, &(c_in, c_out)) in ENCODER_PLAN.iter().enumerate() {
            enc_blocks.push(BasicBlock::new(&format!("enc.b{i:02}"), c_in, c_out, &mut rng)?);
        }
        let enc_proj = LinearLayer::new("enc.proj", bins, dim, &mut rng)?;

        let dec_proj = LinearLayer::new("dec.proj", dim, bins, &mut rng)?;
        let mut dec_blocks = Vec::with_capacity(DECODER_PLAN.len());
        for (i, &(c_in, c_out)) in DECODER_PLAN.iter().enumerate() {
            dec_blocks.push(BasicBlock::new(&format!("dec.b{i:02}"), c_in, c_out, &mut rng)?);
        }
        let dec_out =
            Conv2dLayer::new("dec.out", 4, cfg.head.channels(), (1, 1), (1, 1), (0, 0), &mut rng)?;

        Ok(Self {
            cfg,
            encoder: Encoder { blocks: enc_blocks, proj: enc_proj },
            decoder: Decoder { proj: dec_proj, blocks: dec_blocks, out: dec_out },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    // ----- graph builders ---------------------------------------------------

    /// Training-mode encoder: batch norm uses batch statistics (and folds them
    /// into the running averages) and embedding dropout is active.
    pub fn encode_nodes_train(
        &mut self,
        g: &mut Graph<T>,
        wave: NodeRef,
        bind: Bind,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeRef> {
        let stack = spectral_stack_nodes(g, wave, &self.cfg.stft)?;
        let mut x = self.scale_stack_in(g, stack)?;
        for block in &mut self.encoder.blocks {
            x = block.forward_train(g, x, bind)?;
        }
        let z = self.project_embedding(g, x, bind)?;
        if self.cfg.embedding_dropout > 0.0 {
            g.dropout(z, self.cfg.embedding_dropout, rng)
        } else {
            Ok(z)
        }
    }

    /// Eval-mode encoder: running batch-norm statistics, no dropout.
    pub fn encode_nodes_eval(&self, g: &mut Graph<T>, wave: NodeRef) -> Result<NodeRef> {
        let stack = spectral_stack_nodes(g, wave, &self.cfg.stft)?;
        let mut x = self.scale_stack_in(g, stack)?;
        for block in &self.encoder.blocks {
            x = block.forward_eval(g, x, Bind::Frozen)?;
        }
        self.project_embedding(g, x, Bind::Frozen)
    }

    /// Divide the `[mag, phase, re, im]` stack's non-phase channels by the
    /// spectral scale (see [`ModelConfig::spectral_scale`]).
    fn scale_stack_in(&self, g: &mut Graph<T>, stack: NodeRef) -> Result<NodeRef> {
        let inv = T::of_f64(1.0 / self.cfg.spectral_scale());
        let gains =
            g.constant(Tensor::from_vec(vec![1, 4, 1, 1], vec![inv, T::one(), inv, inv])?);
        g.mul(stack, gains)
    }

    /// `[b, 1, bins, frames] → [b, frames, dim]` projection shared by both modes.
    fn project_embedding(&self, g: &mut Graph<T>, x: NodeRef, bind: Bind) -> Result<NodeRef> {
        let s = g.shape(x).to_vec(); // [b, 1, bins, frames]
        let flat = g.reshape(x, vec![s[0], s[2], s[3]])?;
        let tf = g.permute(flat, &[0, 2, 1])?; // [b, frames, bins]
        self.encoder.proj.forward(g, tf, bind)
    }

    /// `[b, frames, dim] → [b, head_channels, bins, frames]` in train mode,
    /// stopping right after the linear-activation output convolution.
    fn decode_raw_channels_train(
        &mut self,
        g: &mut Graph<T>,
        z: NodeRef,
        bind: Bind,
    ) -> Result<NodeRef> {
        let s = g.shape(z).to_vec();
        if s.len() != 3 {
            return Err(Error::shape(format!("decoder expects [b, frames, dim], got {s:?}")));
        }
        let x = self.decoder.proj.forward(g, z, bind)?; // [b, frames, bins]
        let x = g.permute(x, &[0, 2, 1])?; // [b, bins, frames]
        let (b, f, t) = (s[0], self.cfg.stft.freq_bins(), s[1]);
        let mut x = g.reshape(x, vec![b, 1, f, t])?;
        for block in &mut self.decoder.blocks {
            x = block.forward_train(g, x, bind)?;
        }
        self.decoder.out.forward(g, x, bind)
    }

    /// Training-mode decoder.
    pub fn decode_nodes_train(
        &mut self,
        g: &mut Graph<T>,
        z: NodeRef,
        out_len: usize,
        bind: Bind,
    ) -> Result<NodeRef> {
        let raw = self.decode_raw_channels_train(g, z, bind)?;
        let (re, im) = head_to_re_im(g, raw, self.cfg.head)?;
        let (re, im) = self.scale_spectra_out(g, re, im);
        istft_nodes(g, re, im, &self.cfg.stft, out_len)
    }

    /// Eval-mode decoder.
    pub fn decode_nodes_eval(
        &self,
        g: &mut Graph<T>,
        z: NodeRef,
        out_len: usize,
    ) -> Result<NodeRef> {
        let raw = self.decode_raw_channels_eval(g, z)?;
        let (re, im) = head_to_re_im(g, raw, self.cfg.head)?;
        let (re, im) = self.scale_spectra_out(g, re, im);
        istft_nodes(g, re, im, &self.cfg.stft, out_len)
    }

    /// Multiply decoded real/imaginary planes back up to physical STFT scale,
    /// inverting [`Self::scale_stack_in`].
    fn scale_spectra_out(&self, g: &mut Graph<T>, re: NodeRef, im: NodeRef) -> (NodeRef, NodeRef) {
        let s = T::of_f64(self.cfg.spectral_scale());
        (g.affine(re, s, T::zero()), g.affine(im, s, T::zero()))
    }

    /// Eval-mode raw head channels `[b, channels, bins, frames]`.
    pub fn decode_raw_channels_eval(&self, g: &mut Graph<T>, z: NodeRef) -> Result<NodeRef> {
        let s = g.shape(z).to_vec();
        if s.len() != 3 {
            return Err(Error::shape(format!("decoder expects [b, frames, dim], got {s:?}")));
        }
        let x = self.decoder.proj.forward(g, z, Bind::Frozen)?;
        let x = g.permute(x, &[0, 2, 1])?;
        let (b, f, t) = (s[0], self.cfg.stft.freq_bins(), s[1]);
        let mut x = g.reshape(x, vec![b, 1, f, t])?;
        for block in &self.decoder.blocks {
            x = block.forward_eval(g, x, Bind::Frozen)?;
        }
        self.decoder.out.forward(g, x, Bind::Frozen)
    }

    /// Full train-mode round trip `[b, len] → [b, len]` used by the trainer.
    pub fn forward_train_nodes(
        &mut self,
        g: &mut Graph<T>,
        wave: NodeRef,
        bind: Bind,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeRef> {
        let out_len = g.shape(wave)[1];
        let z = self.encode_nodes_train(g, wave, bind, rng)?;
        self.decode_nodes_train(g, z, out_len, bind)
    }

    // ----- eval entry points ------------------------------------------------

    fn check_rate(&self, x: &Waveform<T>) -> Result<()> {
        if x.sample_rate() != self.cfg.sample_rate {
            return Err(Error::SampleRateMismatch {
                found: x.sample_rate(),
                expected: self.cfg.sample_rate,
            });
        }
        Ok(())
    }

    /// Encode one waveform to its embedding sequence (eval mode).
    pub fn encode(&self, x: &Waveform<T>) -> Result<Latent<T>> {
        self.check_rate(x)?;
        let mut g = Graph::new();
        let wave = g.constant(Tensor::from_vec(vec![1, x.len()], x.samples().to_vec())?);
        let z = self.encode_nodes_eval(&mut g, wave)?;
        let s = g.shape(z).to_vec();
        Latent::new(g.value(z).clone().reshape(vec![s[1], s[2]])?)
    }

    /// Decode an embedding sequence to `out_len` samples (eval mode).
    pub fn decode(&self, z: &Latent<T>, out_len: usize) -> Result<Waveform<T>> {
        let mut g = Graph::new();
        let zn = g.constant(z.values().clone().reshape(vec![1, z.frames(), z.dim()])?);
        let y = self.decode_nodes_eval(&mut g, zn, out_len)?;
        Waveform::new(g.value(y).data().to_vec(), self.cfg.sample_rate)
    }

    /// The longest waveform a `frames`-frame embedding can decode to.
    pub fn max_decode_len(&self, frames: usize) -> usize {
        let n = self.cfg.stft.window_size;
        (frames - 1) * self.cfg.stft.hop + n - n / 2
    }

    /// Encode then decode back to the input's length (eval mode).
    pub fn copy_synth(&self, x: &Waveform<T>) -> Result<Waveform<T>> {
        let z = self.encode(x)?;
        self.decode(&z, x.len())
    }

    // ----- parameter plumbing -----------------------------------------------

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        for b in &self.encoder.blocks {
            out.extend(b.params());
        }
        out.extend(self.encoder.proj.params());
        out.extend(self.decoder.proj.params());
        for b in &self.decoder.blocks {
            out.extend(b.params());
        }
        out.extend(self.decoder.out.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for b in &mut self.encoder.blocks {
            out.extend(b.params_mut());
        }
        out.extend(self.encoder.proj.params_mut());
        out.extend(self.decoder.proj.params_mut());
        for b in &mut self.decoder.blocks {
            out.extend(b.params_mut());
        }
        out.extend(self.decoder.out.params_mut());
        out
    }

    /// Batch-norm running statistics, in a fixed enumeration order.
    pub fn buffers(&self) -> Vec<(&str, &Tensor<T>)> {
        let mut out = Vec::new();
        for b in &self.encoder.blocks {
            out.extend(b.buffers());
        }
        for b in &self.decoder.blocks {
            out.extend(b.buffers());
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(&str, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for b in &mut self.encoder.blocks {
            out.extend(b.buffers_mut());
        }
        for b in &mut self.decoder.blocks {
            out.extend(b.buffers_mut());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value().data().len()).sum()
    }

    /// Pull this graph's accumulated gradients into the parameters.
    pub fn absorb_grads(&mut self, g: &Graph<T>) -> Result<()> {
        for p in self.params_mut() {
            if let Some(grad) = g.param_grad(p.name()) {
                p.accumulate_grad(grad)?;
            }
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for p in self.params_mut() {
            p.clear_grad();
        }
    }

    /// Squared L2 norm over all present parameter gradients.
    pub fn grad_sq_norm(&self) -> f64 {
        self.params()
            .iter()
            .filter_map(|p| p.grad())
            .map(|v| v.sq_norm().as_f64())
            .sum()
    }
}

/// Mean/std summary of the polar-to-cartesian magnitude ratio produced by a
/// four-channel head, plus how many cells were too quiet to compare.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    pub skipped: usize,
}

/// For a `mean4`-headed model, compare the magnitudes of the polar branch
/// (`|channel 0|`) and the cartesian branch (`hypot(channel 2, channel 3)`)
/// cell by cell over the given waveforms.
pub fn head_ratio_stats<T: Scalar>(
    model: &Autovocoder<T>,
    waves: &[Waveform<T>],
) -> Result<RatioStats> {
    if model.config().head != Head::Mean4 {
        return Err(Error::invalid(format!(
            "head ratio statistics need a mean4 head, model uses {}",
            model.config().head.name()
        )));
    }
    let mut count = 0usize;
    let mut skipped = 0usize;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for x in waves {
        let z = model.encode(x)?;
        let mut g = Graph::new();
        let zn = g.constant(z.values().clone().reshape(vec![1, z.frames(), z.dim()])?);
        let raw = model.decode_raw_channels_eval(&mut g, zn)?;
        let s = g.shape(raw).to_vec();
        let (cells, data) = (s[2] * s[3], g.value(raw).data());
        for i in 0..cells {
            let mag = data[i].as_f64().abs();
            let re = data[2 * cells + i].as_f64();
            let im = data[3 * cells + i].as_f64();
            let cart = re.hypot(im);
            if cart < 1e-8 {
                skipped += 1;
                continue;
            }
            count += 1;
            let ratio = mag / cart;
            let delta = ratio - mean;
            mean += delta / count as f64;
            m2 += delta * (ratio - mean);
        }
    }
    if count == 0 {
        return Err(Error::invalid("no spectrogram cells loud enough to compare"));
    }
    let std = if count > 1 { (m2 / (count - 1) as f64).sqrt() } else { 0.0 };
    Ok(RatioStats { mean, std, count, skipped })
}
