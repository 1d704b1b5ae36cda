//! Central-difference verification of reverse-mode gradients.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Graph, NodeRef};

/// Relative-error floor: differences below this magnitude count as equal.
const DENOM_FLOOR: f64 = 1e-8;

/// Finite-difference gradient check runner.
///
/// `run` builds the scalar loss once for the analytic gradients, then
/// re-evaluates it with each input element nudged by `±eps` and compares
/// `(f(x+ε) − f(x−ε)) / 2ε` against the backward pass, reporting the worst
/// relative error `|a − n| / max(|a|, |n|, 1e-8)`.
///
/// The builder must be deterministic: it is called `2·Σ numel(inputs) + 1`
/// times and any internal randomness would show up as a spurious mismatch.
pub struct GradCheck<T> {
    pub eps: T,
    /// Test hook: scale every backward cotangent to prove the checker
    /// catches a broken backward pass.
    pub fault: Option<T>,
}

impl<T: Scalar> Default for GradCheck<T> {
    fn default() -> Self {
        GradCheck { eps: T::of_f64(1e-5), fault: None }
    }
}

impl<T: Scalar> GradCheck<T> {
    pub fn run<F>(&self, build: F, inputs: &[Tensor<T>]) -> Result<f64>
    where
        F: Fn(&mut Graph<T>, &[NodeRef]) -> Result<NodeRef>,
    {
        let eval = |tensors: &[Tensor<T>]| -> Result<T> {
            let mut g = Graph::new();
            let leaves: Vec<NodeRef> = tensors.iter().map(|t| g.constant(t.clone())).collect();
            let loss = build(&mut g, &leaves)?;
            if g.value(loss).len() != 1 {
                return Err(Error::invalid(format!(
                    "gradient check needs a scalar loss, got shape {:?}",
                    g.value(loss).shape()
                )));
            }
            Ok(g.value(loss).item())
        };

        // Analytic pass.
        let mut g = Graph::new();
        let leaves: Vec<NodeRef> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &leaves)?;
        if g.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "gradient check needs a scalar loss, got shape {:?}",
                g.value(loss).shape()
            )));
        }
        if let Some(scale) = self.fault {
            g.inject_backward_fault(scale);
        }
        g.backward(loss)?;
        let analytic: Vec<Tensor<T>> = leaves
            .iter()
            .zip(inputs)
            .map(|(&l, t)| g.grad(l).cloned().unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
            .collect();

        // Numeric pass, one element at a time.
        let mut work: Vec<Tensor<T>> = inputs.to_vec();
        let two_eps = self.eps + self.eps;
        let mut worst = 0.0f64;
        for (ti, t) in inputs.iter().enumerate() {
            for j in 0..t.len() {
                let orig = t.data()[j];
                work[ti].data_mut()[j] = orig + self.eps;
                let fp = eval(&work)?;
                work[ti].data_mut()[j] = orig - self.eps;
                let fm = eval(&work)?;
                work[ti].data_mut()[j] = orig;

                let numeric = ((fp - fm) / two_eps).as_f64();
                let a = analytic[ti].data()[j].as_f64();
                let denom = a.abs().max(numeric.abs()).max(DENOM_FLOOR);
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_gradients_pass_and_faulty_ones_fail() {
        let build = |g: &mut Graph<f64>, xs: &[NodeRef]| -> Result<NodeRef> {
            let s = g.sin(xs[0]);
            let sq = g.square(s);
            g.mean_all(sq)
        };
        let x = Tensor::from_vec(vec![5], vec![0.3, -0.9, 1.7, 0.01, -2.4]).unwrap();

        let clean = GradCheck::default().run(build, &[x.clone()]).unwrap();
        assert!(clean < 1e-7, "clean check should be tight, got {clean}");

        let broken = GradCheck { fault: Some(1.02), ..Default::default() }
            .run(build, &[x])
            .unwrap();
        assert!(broken > 1e-3, "2% fault must be detected, got {broken}");
    }

    #[test]
    fn unused_inputs_get_zero_gradients() {
        let build = |g: &mut Graph<f64>, xs: &[NodeRef]| -> Result<NodeRef> {
            let _ = xs[1];
            g.mean_all(xs[0])
        };
        let a = Tensor::filled(vec![3], 0.5);
        let b = Tensor::filled(vec![2], -1.0);
        let worst = GradCheck::default().run(build, &[a, b]).unwrap();
        assert!(worst < 1e-9);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let build =
            |g: &mut Graph<f64>, xs: &[NodeRef]| -> Result<NodeRef> { Ok(g.square(xs[0])) };
        let x = Tensor::filled(vec![3], 1.0);
        assert!(GradCheck::default().run(build, &[x]).is_err());
    }
}
