//! Training losses: time-domain MSE, log-mel L1, and least-squares GAN terms
//! with feature matching.
//!
//! The generator objective is the weighted sum
//! `λ_mel·L_mel + λ_time·L_time + λ_adv·L_adv + λ_fm·L_fm` with defaults
//! 45 / 100 / 1 / 2. Discriminators train on
//! `Σ_k [ mean((D_k(real) − 1)²) + mean(D_k(fake)²) ]`.

pub mod disc;

use crate::autodiff::{Bind, Graph, NodeRef};
use crate::dsp::graph::log_mel_nodes;
use crate::dsp::mel::{log_mel_spectrogram, MelFilterbank};
use crate::dsp::{StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use disc::DiscriminatorSet;

/// Weights on the generator's loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub mel: f64,
    pub time: f64,
    pub feature_match: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mel: 45.0, time: 100.0, feature_match: 2.0, adversarial: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mel, self.time, self.feature_match, self.adversarial];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!("loss weights must be finite and ≥ 0: {self:?}")));
        }
        Ok(())
    }

    /// Whether any discriminator-dependent term is active.
    pub fn adversarial_active(&self) -> bool {
        self.adversarial > 0.0 || self.feature_match > 0.0
    }
}

/// Mean squared sample-wise error between two equal-length waveform batches.
pub fn time_loss_nodes<T: Scalar>(
    g: &mut Graph<T>,
    prediction: NodeRef,
    target: NodeRef,
) -> Result<NodeRef> {
    let d = g.sub(prediction, target)?;
    let sq = g.square(d);
    g.mean_all(sq)
}

/// Mean absolute error between log-mel spectrograms of two waveform batches.
pub fn mel_loss_nodes<T: Scalar>(
    g: &mut Graph<T>,
    prediction: NodeRef,
    target: NodeRef,
    cfg: &StftConfig,
    fb: &MelFilterbank<T>,
) -> Result<NodeRef> {
    let a = log_mel_nodes(g, prediction, cfg, fb)?;
    let b = log_mel_nodes(g, target, cfg, fb)?;
    let d = g.sub(a, b)?;
    let abs = g.abs(d);
    g.mean_all(abs)
}

/// Plain-value time-domain MSE (no graph), for evaluation and reporting.
pub fn time_domain_mse<T: Scalar>(a: &Waveform<T>, b: &Waveform<T>) -> Result<T> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(format!(
            "waveforms must have equal nonzero length, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = T::of_usize(a.len());
    let sum: T = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum();
    Ok(sum / n)
}

/// Plain-value log-mel L1 distance (no graph), for evaluation and reporting.
pub fn mel_l1_distance<T: Scalar>(
    a: &Waveform<T>,
    b: &Waveform<T>,
    cfg: &StftConfig,
    fb: &MelFilterbank<T>,
) -> Result<T> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(format!(
            "waveforms must have equal nonzero length, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let la = log_mel_spectrogram(a, cfg, fb)?;
    let lb = log_mel_spectrogram(b, cfg, fb)?;
    let n = T::of_usize(la.data().len());
    let sum: T = la.data().iter().zip(lb.data()).map(|(&x, &y)| (x - y).abs()).sum();
    Ok(sum / n)
}

fn add_scalar_terms<T: Scalar>(g: &mut Graph<T>, acc: Option<NodeRef>, term: NodeRef) -> Result<NodeRef> {
    match acc {
        None => Ok(term),
        Some(a) => g.add(a, term),
    }
}

/// Least-squares discriminator loss over the whole ensemble. The fake batch
/// must already be detached from the generator (a constant, or produced under
/// a frozen binding); this function only scores it.
pub fn discriminator_loss_nodes<T: Scalar>(
    g: &mut Graph<T>,
    disc: &DiscriminatorSet<T>,
    real: NodeRef,
    fake: NodeRef,
    bind: Bind,
) -> Result<NodeRef> {
    let real_outs = disc.forward_all(g, real, bind)?;
    let fake_outs = disc.forward_all(g, fake, bind)?;
    let mut total = None;
    for (r, f) in real_outs.iter().zip(&fake_outs) {
        let r_shift = g.affine(r.score, T::one(), -T::one());
        let r_sq = g.square(r_shift);
        let r_term = g.mean_all(r_sq)?;
        total = Some(add_scalar_terms(g, total, r_term)?);
        let f_sq = g.square(f.score);
        let f_term = g.mean_all(f_sq)?;
        total = Some(add_scalar_terms(g, total, f_term)?);
    }
    total.ok_or_else(|| Error::invalid("discriminator ensemble is empty"))
}

/// Generator-side adversarial terms, discriminators frozen: the LSGAN score
/// loss `Σ_k mean((D_k(fake) − 1)²)` and the feature-matching loss
/// `Σ_k Σ_layers mean|D_k layer(real) − D_k layer(fake)|`.
pub fn generator_adversarial_nodes<T: Scalar>(
    g: &mut Graph<T>,
    disc: &DiscriminatorSet<T>,
    real: NodeRef,
    fake: NodeRef,
) -> Result<(NodeRef, NodeRef)> {
    let real_outs = disc.forward_all(g, real, Bind::Frozen)?;
    let fake_outs = disc.forward_all(g, fake, Bind::Frozen)?;
    let mut adv = None;
    let mut fm = None;
    for (r, f) in real_outs.iter().zip(&fake_outs) {
        let shift = g.affine(f.score, T::one(), -T::one());
        let sq = g.square(shift);
        let term = g.mean_all(sq)?;
        adv = Some(add_scalar_terms(g, adv, term)?);
        for (rf, ff) in r.features.iter().zip(&f.features) {
            let d = g.sub(*rf, *ff)?;
            let abs = g.abs(d);
            let l1 = g.mean_all(abs)?;
            fm = Some(add_scalar_terms(g, fm, l1)?);
        }
    }
    match (adv, fm) {
        (Some(a), Some(f)) => Ok((a, f)),
        _ => Err(Error::invalid("discriminator ensemble is empty")),
    }
}

/// The generator's combined objective and its components.
pub struct GeneratorLossTerms {
    pub total: NodeRef,
    pub mel: NodeRef,
    pub time: NodeRef,
    pub adversarial: Option<NodeRef>,
    pub feature_match: Option<NodeRef>,
}

/// Weighted sum of the generator's loss terms.
pub fn combine_generator_losses<T: Scalar>(
    g: &mut Graph<T>,
    weights: &LossWeights,
    mel: NodeRef,
    time: NodeRef,
    adversarial: Option<NodeRef>,
    feature_match: Option<NodeRef>,
) -> Result<GeneratorLossTerms> {
    weights.validate()?;
    let mut total = g.affine(mel, T::of_f64(weights.mel), T::zero());
    let time_w = g.affine(time, T::of_f64(weights.time), T::zero());
    total = g.add(total, time_w)?;
    if let Some(adv) = adversarial {
        let adv_w = g.affine(adv, T::of_f64(weights.adversarial), T::zero());
        total = g.add(total, adv_w)?;
    }
    if let Some(fm) = feature_match {
        let fm_w = g.affine(fm, T::of_f64(weights.feature_match), T::zero());
        total = g.add(total, fm_w)?;
    }
    Ok(GeneratorLossTerms { total, mel, time, adversarial, feature_match })
}
