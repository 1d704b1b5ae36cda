//! Trainable layers: convolution, batch norm, linear, and the residual
//! basic block the encoder and decoder are stacked from.
//!
//! Each layer owns its parameters as named [`Param`]s and builds graph nodes
//! on demand. Training forwards take `&mut self` because batch norm folds the
//! current batch statistics into its running averages; eval forwards take
//! `&self` and use the stored averages.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Bind, Graph, NodeRef, Param};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Batch-norm epsilon and running-average momentum (new = (1−m)·old + m·batch).
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// 2-D convolution with bias.
pub struct Conv2dLayer<T: Scalar> {
    weight: Param<T>,
    bias: Param<T>,
    stride: (usize, usize),
    padding: (usize, usize),
}

impl<T: Scalar> Conv2dLayer<T> {
    /// Kaiming-normal weights (std = √(2 / fan_in)), zero bias.
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if c_in == 0 || c_out == 0 || kernel.0 == 0 || kernel.1 == 0 {
            return Err(Error::invalid(format!(
                "conv {name} needs nonzero channels and kernel, got {c_in}→{c_out} {kernel:?}"
            )));
        }
        let fan_in = (c_in * kernel.0 * kernel.1) as f64;
        let std = T::of_f64((2.0 / fan_in).sqrt());
        let weight = Tensor::random_normal(vec![c_out, c_in, kernel.0, kernel.1], std, rng);
        Ok(Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(vec![c_out])),
            stride,
            padding,
        })
    }

    pub fn forward(&self, g: &mut Graph<T>, x: NodeRef, bind: Bind) -> Result<NodeRef> {
        let w = g.bind(&self.weight, bind)?;
        let b = g.bind(&self.bias, bind)?;
        g.conv2d(x, w, Some(b), self.stride, self.padding)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Per-channel batch normalization over `[b, c, h, w]`.
pub struct BatchNorm2d<T: Scalar> {
    gamma: Param<T>,
    beta: Param<T>,
    running_mean: (String, Tensor<T>),
    running_var: (String, Tensor<T>),
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Tensor::filled(vec![channels], T::one())),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(vec![channels])),
            running_mean: (format!("{name}.running_mean"), Tensor::zeros(vec![channels])),
            running_var: (format!("{name}.running_var"), Tensor::filled(vec![channels], T::one())),
        }
    }

    /// Normalize by batch statistics and fold them into the running averages.
    pub fn forward_train(&mut self, g: &mut Graph<T>, x: NodeRef, bind: Bind) -> Result<NodeRef> {
        let gamma = g.bind(&self.gamma, bind)?;
        let beta = g.bind(&self.beta, bind)?;
        let (y, stats) = g.batch_norm_train(x, gamma, beta, T::of_f64(BN_EPS))?;
        let m = T::of_f64(BN_MOMENTUM);
        let keep = T::one() - m;
        for (r, b) in self.running_mean.1.data_mut().iter_mut().zip(&stats.mean) {
            *r = keep * *r + m * *b;
        }
        for (r, b) in self.running_var.1.data_mut().iter_mut().zip(&stats.var_unbiased) {
            *r = keep * *r + m * *b;
        }
        Ok(y)
    }

    /// Normalize by the stored running averages.
    pub fn forward_eval(&self, g: &mut Graph<T>, x: NodeRef, bind: Bind) -> Result<NodeRef> {
        let gamma = g.bind(&self.gamma, bind)?;
        let beta = g.bind(&self.beta, bind)?;
        g.batch_norm_eval(
            x,
            gamma,
            beta,
            self.running_mean.1.data(),
            self.running_var.1.data(),
            T::of_f64(BN_EPS),
        )
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    /// Non-trainable state (running statistics), name → tensor.
    pub fn buffers(&self) -> Vec<(&str, &Tensor<T>)> {
        vec![
            (self.running_mean.0.as_str(), &self.running_mean.1),
            (self.running_var.0.as_str(), &self.running_var.1),
        ]
    }

    pub fn buffers_mut(&mut self) -> Vec<(&str, &mut Tensor<T>)> {
        vec![
            (self.running_mean.0.as_str(), &mut self.running_mean.1),
            (self.running_var.0.as_str(), &mut self.running_var.1),
        ]
    }
}

/// Dense layer over the last axis.
pub struct LinearLayer<T: Scalar> {
    weight: Param<T>,
    bias: Param<T>,
}

impl<T: Scalar> LinearLayer<T> {
    /// Uniform ±1/√fan_in init for weight and bias.
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid(format!(
                "linear {name} needs nonzero dims, got {in_dim}→{out_dim}"
            )));
        }
        let bound = T::of_f64(1.0 / (in_dim as f64).sqrt());
        let weight = Tensor::random_uniform(vec![out_dim, in_dim], -bound, bound, rng);
        let bias = Tensor::random_uniform(vec![out_dim], -bound, bound, rng);
        Ok(Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), bias),
        })
    }

    pub fn forward(&self, g: &mut Graph<T>, x: NodeRef, bind: Bind) -> Result<NodeRef> {
        let w = g.bind(&self.weight, bind)?;
        let b = g.bind(&self.bias, bind)?;
        g.linear(x, w, Some(b))
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// conv3×3 → bn → relu → conv3×3 → bn → relu, with an identity skip
/// connection added whenever input and output channel counts agree.
pub struct BasicBlock<T: Scalar> {
    conv1: Conv2dLayer<T>,
    bn1: BatchNorm2d<T>,
    conv2: Conv2dLayer<T>,
    bn2: BatchNorm2d<T>,
    residual: bool,
}

impl<T: Scalar> BasicBlock<T> {
    pub fn new(name: &str, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            conv1: Conv2dLayer::new(&format!("{name}.conv1"), c_in, c_out, (3, 3), (1, 1), (1, 1), rng)?,
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), c_out),
            conv2: Conv2dLayer::new(&format!("{name}.conv2"), c_out, c_out, (3, 3), (1, 1), (1, 1), rng)?,
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), c_out),
            residual: c_in == c_out,
        })
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    pub fn forward_train(&mut self, g: &mut Graph<T>, x: NodeRef, bind: Bind) -> Result<NodeRef> {
        let h = self.conv1.forward(g, x, bind)?;
        let h = self.bn1.forward_train(g, h, bind)?;
        let h = g.relu(h);
        let h = self.conv2.forward(g, h, bind)?;
        let h = self.bn2.forward_train(g, h, bind)?;
        let h = g.relu(h);
        if self.residual {
            g.add(h, x)
        } else {
            Ok(h)
        }
    }

    pub fn forward_eval(&self, g: &mut Graph<T>, x: NodeRef, bind: Bind) -> Result<NodeRef> {
        let h = self.conv1.forward(g, x, bind)?;
        let h = self.bn1.forward_eval(g, h, bind)?;
        let h = g.relu(h);
        let h = self.conv2.forward(g, h, bind)?;
        let h = self.bn2.forward_eval(g, h, bind)?;
        let h = g.relu(h);
        if self.residual {
            g.add(h, x)
        } else {
            Ok(h)
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = self.conv1.params();
        out.extend(self.bn1.params());
        out.extend(self.conv2.params());
        out.extend(self.bn2.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.conv1.params_mut();
        out.extend(self.bn1.params_mut());
        out.extend(self.conv2.params_mut());
        out.extend(self.bn2.params_mut());
        out
    }

    pub fn buffers(&self) -> Vec<(&str, &Tensor<T>)> {
        let mut out = self.bn1.buffers();
        out.extend(self.bn2.buffers());
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(&str, &mut Tensor<T>)> {
        let mut out = self.bn1.buffers_mut();
        out.extend(self.bn2.buffers_mut());
        out
    }
}

/// Leaky-ReLU slope used throughout the discriminators.
pub const LEAKY_SLOPE: f64 = 0.1;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn basic_block_residual_follows_channel_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let same = BasicBlock::<f64>::new("b0", 4, 4, &mut rng).unwrap();
        let diff = BasicBlock::<f64>::new("b1", 4, 1, &mut rng).unwrap();
        assert!(same.residual());
        assert!(!diff.residual());
    }

    #[test]
    fn block_shapes_and_param_names_are_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut block = BasicBlock::<f64>::new("enc.b05", 4, 1, &mut rng).unwrap();
        let names: Vec<_> = block.params().iter().map(|p| p.name().to_string()).collect();
        assert_eq!(
            names,
            vec![
                "enc.b05.conv1.weight",
                "enc.b05.conv1.bias",
                "enc.b05.bn1.gamma",
                "enc.b05.bn1.beta",
                "enc.b05.conv2.weight",
                "enc.b05.conv2.bias",
                "enc.b05.bn2.gamma",
                "enc.b05.bn2.beta",
            ]
        );

        let mut g = Graph::new();
        let x = g.leaf(Tensor::random_normal(vec![2, 4, 6, 5], 1.0, &mut rng));
        let y = block.forward_train(&mut g, x, Bind::Trainable).unwrap();
        assert_eq!(g.shape(y), &[2, 1, 6, 5]);
    }

    #[test]
    fn batch_norm_updates_running_stats_only_in_train_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bn = BatchNorm2d::<f64>::new("bn", 2);
        let x = Tensor::random_normal(vec![3, 2, 4, 4], 1.0, &mut rng).map(|v| v + 5.0);

        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        bn.forward_eval(&mut g, xn, Bind::Frozen).unwrap();
        assert_eq!(bn.buffers()[0].1.data(), &[0.0, 0.0]);

        let mut g = Graph::new();
        let xn = g.constant(x);
        bn.forward_train(&mut g, xn, Bind::Frozen).unwrap();
        // Mean of ~5 folded in with momentum 0.1 → running mean near 0.5.
        let rm = bn.buffers()[0].1.data();
        assert!(rm.iter().all(|&v| (0.35..0.65).contains(&v)), "{rm:?}");
    }

    #[test]
    fn eval_after_convergence_matches_batch_stats_direction() {
        // After many train passes on one batch the running stats approach the
        // batch stats, so eval output approaches train output.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut bn = BatchNorm2d::<f64>::new("bn", 1);
        let x = Tensor::random_normal(vec![4, 1, 3, 3], 2.0, &mut rng);
        let mut train_out = Vec::new();
        for _ in 0..200 {
            let mut g = Graph::new();
            let xn = g.constant(x.clone());
            let y = bn.forward_train(&mut g, xn, Bind::Frozen).unwrap();
            train_out = g.value(y).data().to_vec();
        }
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let y = bn.forward_eval(&mut g, xn, Bind::Frozen).unwrap();
        // Unbiased correction (m = 36) keeps a small systematic gap.
        for (a, b) in g.value(y).data().iter().zip(&train_out) {
            assert!((a - b).abs() < 0.05, "{a} vs {b}");
        }
    }
}
