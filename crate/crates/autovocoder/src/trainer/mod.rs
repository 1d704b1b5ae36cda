//! Two-phase GAN training loop with deterministic batching and resumable
//! state.
//!
//! Each step runs the discriminator phase first (generator frozen, fresh
//! forward in train mode), then the generator phase (discriminators frozen).
//! When the adversarial and feature-matching weights are both zero the
//! discriminator phase — and the discriminator ensemble itself — is skipped
//! entirely. Note the generator's batch-norm layers therefore see the batch
//! twice per adversarial step and fold it into their running statistics
//! twice; this is deterministic and matched on resume.
//!
//! Determinism contract: same config, same corpus, same step count ⇒
//! bit-identical parameters, on one machine or across checkpoint save/load.

pub mod adam;
pub mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Bind, Graph};
use crate::config::RunConfig;
use crate::dsp::mel::MelFilterbank;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::losses::disc::DiscriminatorSet;
use crate::losses::{
    combine_generator_losses, discriminator_loss_nodes, generator_adversarial_nodes,
    mel_loss_nodes, time_loss_nodes,
};
use crate::model::Autovocoder;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use adam::Adam;

/// Loss values and diagnostics from one optimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub total: f64,
    pub mel_l1: f64,
    pub time_mse: f64,
    pub adversarial: f64,
    pub feature_match: f64,
    pub d_loss: f64,
    pub grad_norm_g: f64,
    pub grad_norm_d: f64,
}

pub struct Trainer<T: Scalar> {
    pub(crate) cfg: RunConfig,
    pub(crate) model: Autovocoder<T>,
    pub(crate) disc: Option<DiscriminatorSet<T>>,
    pub(crate) fb: MelFilterbank<T>,
    pub(crate) adam_g: Adam<T>,
    pub(crate) adam_d: Adam<T>,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) step: u64,
    pub(crate) steps_per_epoch: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Autovocoder::new(cfg.model.clone())?;
        let disc = if cfg.train.weights.adversarial_active() {
            Some(DiscriminatorSet::new(cfg.disc.clone())?)
        } else {
            None
        };
        let fb = cfg.mel.build_filterbank(&cfg.model.stft, cfg.model.sample_rate)?;
        Ok(Self {
            model,
            disc,
            fb,
            adam_g: Adam::new(cfg.train.adam)?,
            adam_d: Adam::new(cfg.train.adam)?,
            rng: ChaCha8Rng::seed_from_u64(cfg.train.seed),
            step: 0,
            steps_per_epoch: 1,
            cfg,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Autovocoder<T> {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Autovocoder<T> {
        &mut self.model
    }

    pub fn discriminators(&self) -> Option<&DiscriminatorSet<T>> {
        self.disc.as_ref()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.steps_per_epoch
    }

    /// One epoch ≈ one pass over the corpus in crop-sized units.
    pub fn set_steps_per_epoch_from_corpus(&mut self, corpus: &[Waveform<T>]) {
        let total: usize = corpus.iter().map(|w| w.len()).sum();
        let per_step = self.cfg.train.batch_size * self.cfg.train.segment_len;
        self.steps_per_epoch = ((total / per_step.max(1)) as u64).max(1);
    }

    /// Current learning rates after per-epoch decay.
    pub fn current_lrs(&self) -> (f64, f64) {
        let epoch = (self.step / self.steps_per_epoch) as i32;
        let scale = self.cfg.train.lr_decay.powi(epoch);
        (self.cfg.train.lr * scale, self.cfg.train.lr_disc * scale)
    }

    /// Draw a `[batch, segment_len]` crop batch, uniform over all hop-aligned
    /// crop positions across the corpus.
    pub fn sample_batch(&mut self, corpus: &[Waveform<T>]) -> Result<Tensor<T>> {
        let seg = self.cfg.train.segment_len;
        let hop = self.cfg.model.stft.hop;
        let counts: Vec<usize> = corpus
            .iter()
            .map(|w| if w.len() >= seg { (w.len() - seg) / hop + 1 } else { 0 })
            .collect();
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::invalid(format!(
                "no clip is at least segment_len = {seg} samples long"
            )));
        }
        let b = self.cfg.train.batch_size;
        let mut data = Vec::with_capacity(b * seg);
        for _ in 0..b {
            let mut r = self.rng.random_range(0..total);
            let mut file = 0usize;
            while r >= counts[file] {
                r -= counts[file];
                file += 1;
            }
            let start = r * hop;
            data.extend_from_slice(&corpus[file].samples()[start..start + seg]);
        }
        Tensor::from_vec(vec![b, seg], data)
    }

    /// Index of the first batch row whose reconstruction is non-finite.
    fn first_bad_row(values: &Tensor<T>) -> usize {
        let rows = values.shape()[0];
        let cols = values.data().len() / rows.max(1);
        for r in 0..rows {
            if values.data()[r * cols..(r + 1) * cols].iter().any(|v| !v.is_finite()) {
                return r;
            }
        }
        0
    }

    /// One optimization step on a `[batch, len]` waveform batch.
    pub fn train_step(&mut self, batch: &Tensor<T>) -> Result<StepMetrics> {
        if batch.shape().len() != 2 {
            return Err(Error::shape(format!("batch must be [b, len], got {:?}", batch.shape())));
        }
        let adversarial = self.disc.is_some() && self.cfg.train.weights.adversarial_active();
        let (lr_g, lr_d) = self.current_lrs();
        let stft = self.cfg.model.stft;
        let weights = self.cfg.train.weights;

        // --- discriminator phase -------------------------------------------
        let (d_loss_val, grad_norm_d) = if adversarial {
            let mut g = Graph::new();
            let real = g.constant(batch.clone());
            let fake =
                self.model.forward_train_nodes(&mut g, real, Bind::Frozen, &mut self.rng)?;
            if !g.value(fake).all_finite() {
                return Err(Error::NanLoss {
                    step: self.step,
                    batch_index: Self::first_bad_row(g.value(fake)),
                    detail: "non-finite reconstruction in discriminator phase".into(),
                });
            }
            let disc = self.disc.as_ref().expect("adversarial implies discriminators");
            let d_loss = discriminator_loss_nodes(&mut g, disc, real, fake, Bind::Trainable)?;
            let d_val = g.value(d_loss).item().as_f64();
            if !d_val.is_finite() {
                return Err(Error::NanLoss {
                    step: self.step,
                    batch_index: 0,
                    detail: format!("discriminator loss is {d_val}"),
                });
            }
            g.backward(d_loss)?;
            let disc = self.disc.as_mut().expect("adversarial implies discriminators");
            disc.absorb_grads(&g)?;
            let norm = disc.grad_sq_norm().sqrt();
            for p in disc.params_mut() {
                self.adam_d.step_param(p, lr_d)?;
            }
            (d_val, norm)
        } else {
            (0.0, 0.0)
        };

        // --- generator phase ------------------------------------------------
        let mut g = Graph::new();
        let real = g.constant(batch.clone());
        let fake = self.model.forward_train_nodes(&mut g, real, Bind::Trainable, &mut self.rng)?;
        if !g.value(fake).all_finite() {
            return Err(Error::NanLoss {
                step: self.step,
                batch_index: Self::first_bad_row(g.value(fake)),
                detail: "non-finite reconstruction in generator phase".into(),
            });
        }
        let mel = mel_loss_nodes(&mut g, fake, real, &stft, &self.fb)?;
        let time = time_loss_nodes(&mut g, fake, real)?;
        let (adv_node, fm_node) = if adversarial {
            let disc = self.disc.as_ref().expect("adversarial implies discriminators");
            let (a, f) = generator_adversarial_nodes(&mut g, disc, real, fake)?;
            (Some(a), Some(f))
        } else {
            (None, None)
        };
        let terms = combine_generator_losses(&mut g, &weights, mel, time, adv_node, fm_node)?;
        let total_val = g.value(terms.total).item().as_f64();
        if !total_val.is_finite() {
            let parts = format!(
                "mel {} time {} adv {:?} fm {:?}",
                g.value(terms.mel).item().as_f64(),
                g.value(terms.time).item().as_f64(),
                terms.adversarial.map(|n| g.value(n).item().as_f64()),
                terms.feature_match.map(|n| g.value(n).item().as_f64()),
            );
            return Err(Error::NanLoss {
                step: self.step,
                batch_index: Self::first_bad_row(g.value(fake)),
                detail: format!("generator loss is {total_val} ({parts})"),
            });
        }
        let metrics_pre = (
            g.value(terms.mel).item().as_f64(),
            g.value(terms.time).item().as_f64(),
            terms.adversarial.map(|n| g.value(n).item().as_f64()).unwrap_or(0.0),
            terms.feature_match.map(|n| g.value(n).item().as_f64()).unwrap_or(0.0),
        );
        g.backward(terms.total)?;
        self.model.absorb_grads(&g)?;
        let grad_norm_g = self.model.grad_sq_norm().sqrt();
        for p in self.model.params_mut() {
            self.adam_g.step_param(p, lr_g)?;
        }

        self.step += 1;
        Ok(StepMetrics {
            step: self.step,
            lr_g,
            lr_d,
            total: total_val,
            mel_l1: metrics_pre.0,
            time_mse: metrics_pre.1,
            adversarial: metrics_pre.2,
            feature_match: metrics_pre.3,
            d_loss: d_loss_val,
            grad_norm_g,
            grad_norm_d,
        })
    }

    /// Train for `steps` steps, sampling batches from `corpus`.
    pub fn run(
        &mut self,
        corpus: &[Waveform<T>],
        steps: u64,
        mut on_step: impl FnMut(&StepMetrics),
    ) -> Result<()> {
        self.set_steps_per_epoch_from_corpus(corpus);
        for _ in 0..steps {
            let batch = self.sample_batch(corpus)?;
            let metrics = self.train_step(&batch)?;
            on_step(&metrics);
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &std::path::Path) -> Result<()> {
        checkpoint::save(self, path)
    }

    pub fn load_checkpoint(path: &std::path::Path) -> Result<Self> {
        checkpoint::load(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{Head, StftConfig};

    pub(crate) fn tiny_run_config(adversarial: bool) -> RunConfig {
        let mut cfg = RunConfig::default().with_master_seed(31);
        cfg.model.stft = StftConfig::new(32, 8);
        cfg.model.sample_rate = 8000;
        cfg.model.representation_dim = 6;
        cfg.model.head = Head::Cartesian;
        cfg.mel.n_mels = 8;
        cfg.train.batch_size = 2;
        cfg.train.segment_len = 96;
        if !adversarial {
            cfg.train.weights.adversarial = 0.0;
            cfg.train.weights.feature_match = 0.0;
        }
        cfg.disc.periods = vec![2, 3];
        cfg.disc.scales = 1;
        cfg.disc.channel_cap = 4;
        cfg
    }

    pub(crate) fn tiny_corpus(n: usize, len: usize) -> Vec<Waveform<f64>> {
        (0..n)
            .map(|k| {
                let f = 0.02 + 0.013 * k as f64;
                let samples = (0..len).map(|i| 0.45 * (f * i as f64).sin()).collect();
                Waveform::new(samples, 8000).unwrap()
            })
            .collect()
    }

    #[test]
    fn reconstruction_only_training_descends() {
        let mut t = Trainer::<f64>::new(tiny_run_config(false)).unwrap();
        assert!(t.discriminators().is_none(), "no adversarial weights, no discriminators");
        let corpus = tiny_corpus(3, 400);
        let mut first = None;
        let mut last = None;
        t.run(&corpus, 30, |m| {
            assert_eq!(m.d_loss, 0.0);
            assert_eq!(m.grad_norm_d, 0.0);
            first.get_or_insert(m.total);
            last = Some(m.total);
        })
        .unwrap();
        assert_eq!(t.step_count(), 30);
        assert!(last.unwrap() < first.unwrap(), "{last:?} !< {first:?}");
    }

    #[test]
    fn adversarial_training_updates_both_networks() {
        let mut t = Trainer::<f64>::new(tiny_run_config(true)).unwrap();
        let corpus = tiny_corpus(2, 300);
        let mut saw_d = false;
        t.run(&corpus, 3, |m| {
            if m.grad_norm_d > 0.0 && m.d_loss > 0.0 {
                saw_d = true;
            }
            assert!(m.total.is_finite());
        })
        .unwrap();
        assert!(saw_d, "discriminator phase never produced gradients");
    }

    #[test]
    fn training_is_bit_reproducible() {
        let corpus = tiny_corpus(3, 400);
        let run = || {
            let mut t = Trainer::<f64>::new(tiny_run_config(false)).unwrap();
            t.run(&corpus, 5, |_| {}).unwrap();
            t.model().params().iter().map(|p| p.value().data().to_vec()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn crops_are_hop_aligned_and_weighted() {
        let cfg = tiny_run_config(false);
        let hop = cfg.model.stft.hop;
        let seg = cfg.train.segment_len;
        let mut t = Trainer::<f64>::new(cfg).unwrap();
        // One long clip and one exactly segment-sized clip: the long one has
        // (400−96)/8+1 = 39 valid crops, the short one exactly 1.
        let corpus = tiny_corpus(1, 400)
            .into_iter()
            .chain(tiny_corpus(1, seg))
            .collect::<Vec<_>>();
        let mut short_hits = 0;
        for _ in 0..200 {
            let batch = t.sample_batch(&corpus).unwrap();
            for row in 0..2 {
                let crop = &batch.data()[row * seg..(row + 1) * seg];
                let from_short = crop == corpus[1].samples();
                if from_short {
                    short_hits += 1;
                    continue;
                }
                // Must match the long clip at some hop-aligned offset.
                let found = (0..=(400 - seg) / hop)
                    .any(|k| crop == &corpus[0].samples()[k * hop..k * hop + seg]);
                assert!(found, "crop not hop-aligned");
            }
        }
        // 1-in-40 weighting over 400 draws → expect ~10 short-clip hits.
        assert!(short_hits > 0 && short_hits < 60, "{short_hits}");
    }

    #[test]
    fn too_short_corpus_is_rejected() {
        let mut t = Trainer::<f64>::new(tiny_run_config(false)).unwrap();
        let corpus = tiny_corpus(2, 50);
        assert!(t.sample_batch(&corpus).is_err());
    }

    #[test]
    fn lr_decays_per_epoch() {
        let mut t = Trainer::<f64>::new(tiny_run_config(false)).unwrap();
        t.steps_per_epoch = 10;
        assert_eq!(t.current_lrs().0, 2e-4);
        t.step = 25;
        let expect = 2e-4 * 0.999f64.powi(2);
        assert!((t.current_lrs().0 - expect).abs() < 1e-18);
    }
}
