//! Waveform discriminators for adversarial training.
//!
//! Two families judge the generator's output:
//! * **Period discriminators** fold the waveform into a `[len/p, p]` image per
//!   period `p` and run strided 2-D convolutions down the time axis, exposing
//!   periodic artifacts that plain 1-D stacks miss.
//! * **Scale discriminators** run wide 1-D convolutions on the raw waveform
//!   and on progressively average-pooled copies of it.
//!
//! All stacks use plain convolutions with LeakyReLU(0.1) and a configurable
//! channel cap (tests shrink it; the default tops out at 64 channels).
//! Intermediate activations are collected as feature maps for the generator's
//! feature-matching loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Bind, Graph, NodeRef, Param};
use crate::error::{Error, Result};
use crate::model::layers::{Conv2dLayer, LEAKY_SLOPE};
use crate::scalar::Scalar;

/// Channel progression before capping, shared shape of both families.
const MPD_WIDTHS: [usize; 5] = [8, 16, 32, 64, 64];
const MSD_WIDTHS: [usize; 6] = [8, 16, 32, 32, 64, 64];
const MSD_KERNELS: [usize; 6] = [15, 41, 41, 41, 41, 5];
const MSD_STRIDES: [usize; 6] = [1, 2, 2, 4, 4, 1];

/// Construction parameters for the discriminator ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    /// Fold periods for the period discriminators.
    pub periods: Vec<usize>,
    /// Number of scale discriminators (scale `k` sees `k` rounds of pooling).
    pub scales: usize,
    /// Upper bound on any convolution's channel count.
    pub channel_cap: usize,
    /// Seed for weight initialization.
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { periods: vec![2, 3, 5, 7, 11], scales: 3, channel_cap: 64, seed: 777 }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.periods.iter().any(|&p| p == 0) {
            return Err(Error::invalid("discriminator periods must be nonzero"));
        }
        if self.periods.is_empty() && self.scales == 0 {
            return Err(Error::invalid("discriminator ensemble is empty"));
        }
        if self.channel_cap == 0 {
            return Err(Error::invalid("channel_cap must be nonzero"));
        }
        Ok(())
    }
}

/// One discriminator's verdict: a score map plus per-layer activations.
pub struct DiscOutput {
    pub score: NodeRef,
    pub features: Vec<NodeRef>,
}

/// Folds `[b, len]` into `[b, 1, len/p, p]` and convolves down the long axis.
struct PeriodDiscriminator<T: Scalar> {
    period: usize,
    convs: Vec<Conv2dLayer<T>>,
    post: Conv2dLayer<T>,
}

impl<T: Scalar> PeriodDiscriminator<T> {
    fn new(name: &str, period: usize, cap: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut convs = Vec::with_capacity(MPD_WIDTHS.len());
        let mut c_in = 1;
        for (i, &w) in MPD_WIDTHS.iter().enumerate() {
            let c_out = w.min(cap);
            let stride = if i + 1 == MPD_WIDTHS.len() { (1, 1) } else { (3, 1) };
            convs.push(Conv2dLayer::new(
                &format!("{name}.conv{i}"),
                c_in,
                c_out,
                (5, 1),
                stride,
                (2, 0),
                rng,
            )?);
            c_in = c_out;
        }
        let post =
            Conv2dLayer::new(&format!("{name}.post"), c_in, 1, (3, 1), (1, 1), (1, 0), rng)?;
        Ok(Self { period, convs, post })
    }

    fn forward(&self, g: &mut Graph<T>, wave: NodeRef, bind: Bind) -> Result<DiscOutput> {
        let s = g.shape(wave).to_vec();
        if s.len() != 2 {
            return Err(Error::shape(format!("discriminator expects [b, len], got {s:?}")));
        }
        let (b, len) = (s[0], s[1]);
        let p = self.period;
        let pad = (p - len % p) % p;
        let padded = if pad > 0 { g.pad_last(wave, 0, pad)? } else { wave };
        let mut x = g.reshape(padded, vec![b, 1, (len + pad) / p, p])?;
        let mut features = Vec::with_capacity(self.convs.len() + 1);
        for conv in &self.convs {
            x = conv.forward(g, x, bind)?;
            x = g.leaky_relu(x, T::of_f64(LEAKY_SLOPE));
            features.push(x);
        }
        let score = self.post.forward(g, x, bind)?;
        features.push(score);
        Ok(DiscOutput { score, features })
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.convs.iter().flat_map(|c| c.params()).collect();
        out.extend(self.post.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> =
            self.convs.iter_mut().flat_map(|c| c.params_mut()).collect();
        out.extend(self.post.params_mut());
        out
    }
}

/// Wide 1-D convolutions expressed as height-1 2-D convolutions.
struct ScaleDiscriminator<T: Scalar> {
    convs: Vec<Conv2dLayer<T>>,
    post: Conv2dLayer<T>,
}

impl<T: Scalar> ScaleDiscriminator<T> {
    fn new(name: &str, cap: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut convs = Vec::with_capacity(MSD_WIDTHS.len());
        let mut c_in = 1;
        for i in 0..MSD_WIDTHS.len() {
            let c_out = MSD_WIDTHS[i].min(cap);
            let k = MSD_KERNELS[i];
            convs.push(Conv2dLayer::new(
                &format!("{name}.conv{i}"),
                c_in,
                c_out,
                (1, k),
                (1, MSD_STRIDES[i]),
                (0, k / 2),
                rng,
            )?);
            c_in = c_out;
        }
        let post =
            Conv2dLayer::new(&format!("{name}.post"), c_in, 1, (1, 3), (1, 1), (0, 1), rng)?;
        Ok(Self { convs, post })
    }

    /// `pooled` is `[b, 1, len]` after this scale's rounds of pooling.
    fn forward(&self, g: &mut Graph<T>, pooled: NodeRef, bind: Bind) -> Result<DiscOutput> {
        let s = g.shape(pooled).to_vec();
        let mut x = g.reshape(pooled, vec![s[0], 1, 1, s[2]])?;
        let mut features = Vec::with_capacity(self.convs.len() + 1);
        for conv in &self.convs {
            x = conv.forward(g, x, bind)?;
            x = g.leaky_relu(x, T::of_f64(LEAKY_SLOPE));
            features.push(x);
        }
        let score = self.post.forward(g, x, bind)?;
        features.push(score);
        Ok(DiscOutput { score, features })
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.convs.iter().flat_map(|c| c.params()).collect();
        out.extend(self.post.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> =
            self.convs.iter_mut().flat_map(|c| c.params_mut()).collect();
        out.extend(self.post.params_mut());
        out
    }
}

/// The full ensemble: one period discriminator per configured period plus the
/// configured number of scale discriminators.
pub struct DiscriminatorSet<T: Scalar> {
    cfg: DiscriminatorConfig,
    periods: Vec<PeriodDiscriminator<T>>,
    scales: Vec<ScaleDiscriminator<T>>,
}

impl<T: Scalar> DiscriminatorSet<T> {
    pub fn new(cfg: DiscriminatorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let periods = cfg
            .periods
            .iter()
            .map(|&p| PeriodDiscriminator::new(&format!("mpd{p}"), p, cfg.channel_cap, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let scales = (0..cfg.scales)
            .map(|s| ScaleDiscriminator::new(&format!("msd{s}"), cfg.channel_cap, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cfg, periods, scales })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    /// Run every discriminator on `wave` (`[b, len]`), periods first, then
    /// scales in pooling order.
    pub fn forward_all(
        &self,
        g: &mut Graph<T>,
        wave: NodeRef,
        bind: Bind,
    ) -> Result<Vec<DiscOutput>> {
        let mut outs = Vec::with_capacity(self.periods.len() + self.scales.len());
        for pd in &self.periods {
            outs.push(pd.forward(g, wave, bind)?);
        }
        if !self.scales.is_empty() {
            let s = g.shape(wave).to_vec();
            let mut pooled = g.reshape(wave, vec![s[0], 1, s[1]])?;
            for (k, sd) in self.scales.iter().enumerate() {
                if k > 0 {
                    pooled = g.avg_pool1d(pooled, 4, 2, 1)?;
                }
                outs.push(sd.forward(g, pooled, bind)?);
            }
        }
        Ok(outs)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.periods.iter().flat_map(|d| d.params()).collect();
        out.extend(self.scales.iter().flat_map(|d| d.params()));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> =
            self.periods.iter_mut().flat_map(|d| d.params_mut()).collect();
        out.extend(self.scales.iter_mut().flat_map(|d| d.params_mut()));
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

    pub fn grad_sq_norm(&self) -> f64 {
        self.params()
            .iter()
            .filter_map(|p| p.grad())
            .map(|v| v.sq_norm().as_f64())
            .sum()
    }
}
