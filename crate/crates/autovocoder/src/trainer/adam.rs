//! Adam with bias correction, keyed by parameter name so optimizer state
//! survives checkpointing independently of parameter storage order.

use std::collections::HashMap;

use crate::autodiff::Param;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.8, beta2: 0.99, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid(format!(
                "adam betas must lie in [0, 1): {} / {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!("adam eps must be positive: {}", self.eps)));
        }
        Ok(())
    }
}

/// Per-parameter first/second moment estimates and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamSlot<T: Scalar> {
    pub t: u64,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

pub struct Adam<T: Scalar> {
    cfg: AdamConfig,
    slots: HashMap<String, AdamSlot<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, slots: HashMap::new() })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Apply one update to `param` from its accumulated gradient, then clear
    /// the gradient. A missing gradient is a sequencing bug, not a no-op.
    pub fn step_param(&mut self, param: &mut Param<T>, lr: f64) -> Result<()> {
        let grad = param
            .grad()
            .ok_or_else(|| {
                Error::State(format!("adam step on {} without a gradient", param.name()))
            })?
            .clone();
        let slot = self.slots.entry(param.name().to_string()).or_insert_with(|| AdamSlot {
            t: 0,
            m: Tensor::zeros(grad.shape().to_vec()),
            v: Tensor::zeros(grad.shape().to_vec()),
        });
        if slot.m.shape() != grad.shape() {
            return Err(Error::shape(format!(
                "adam slot for {} has shape {:?}, gradient is {:?}",
                param.name(),
                slot.m.shape(),
                grad.shape()
            )));
        }
        slot.t += 1;
        let b1 = T::of_f64(self.cfg.beta1);
        let b2 = T::of_f64(self.cfg.beta2);
        let one = T::one();
        // Bias corrections at the new step count.
        let c1 = T::of_f64(1.0 - self.cfg.beta1.powi(slot.t as i32));
        let c2 = T::of_f64(1.0 - self.cfg.beta2.powi(slot.t as i32));
        let eps = T::of_f64(self.cfg.eps);
        let lr_t = T::of_f64(lr);
        let value = param.value_mut().data_mut();
        for i in 0..value.len() {
            let gi = grad.data()[i];
            let m = b1 * slot.m.data()[i] + (one - b1) * gi;
            let v = b2 * slot.v.data()[i] + (one - b2) * gi * gi;
            slot.m.data_mut()[i] = m;
            slot.v.data_mut()[i] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            value[i] -= lr_t * m_hat / (v_hat.sqrt() + eps);
        }
        param.clear_grad();
        Ok(())
    }

    /// Slots in sorted-name order, for serialization.
    pub fn slots_sorted(&self) -> Vec<(&str, &AdamSlot<T>)> {
        let mut out: Vec<_> = self.slots.iter().map(|(k, v)| (k.as_str(), v)).collect();
        out.sort_by(|a, b| a.0.cmp(b.0));
        out
    }

    pub fn slot(&self, name: &str) -> Option<&AdamSlot<T>> {
        self.slots.get(name)
    }

    pub fn insert_slot(&mut self, name: String, slot: AdamSlot<T>) {
        self.slots.insert(name, slot);
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param_with_grad(value: Vec<f64>, grad: Vec<f64>) -> Param<f64> {
        let n = value.len();
        let mut p = Param::new("w", Tensor::from_vec(vec![n], value).unwrap());
        p.accumulate_grad(&Tensor::from_vec(vec![n], grad).unwrap()).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        let mut p = param_with_grad(vec![1.0, -2.0, 3.0], vec![0.0; 3]);
        adam.step_param(&mut p, 1e-3).unwrap();
        assert_eq!(p.value().data(), &[1.0, -2.0, 3.0]);
        assert!(p.grad().is_none(), "gradient must be cleared by the step");
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // With bias correction, step 1 gives m̂ = g and v̂ = g², so the update
        // is lr·g/(|g| + eps) ≈ lr·sign(g).
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        let mut p = param_with_grad(vec![0.5, 0.5], vec![0.2, -4.0]);
        adam.step_param(&mut p, 1e-2).unwrap();
        assert!((p.value().data()[0] - (0.5 - 1e-2)).abs() < 1e-6);
        assert!((p.value().data()[1] - (0.5 + 1e-2)).abs() < 1e-6);
    }

    #[test]
    fn matches_reference_trajectory() {
        // Hand-rolled scalar Adam as the oracle.
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(cfg).unwrap();
        let mut p = Param::new("w", Tensor::scalar(1.0f64));
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=5 {
            let g = 0.3 * x; // gradient of 0.15·x²
            p.accumulate_grad(&Tensor::scalar(g)).unwrap();
            adam.step_param(&mut p, 1e-2).unwrap();
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            x -= 1e-2 * m_hat / (v_hat.sqrt() + cfg.eps);
            assert!((p.value().item() - x).abs() < 1e-14, "step {t}");
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        let mut p = Param::new("w", Tensor::scalar(1.0f64));
        assert!(adam.step_param(&mut p, 1e-3).is_err());
    }
}
