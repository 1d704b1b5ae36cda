//! Finite-difference verification of the backward pass, op by op and through
//! composed pipelines. Backs the `gradcheck` CLI subcommand.
//!
//! Every check builds a scalar loss from deterministic inputs positioned away
//! from kinks (ReLU corners, `clamp` floors, the `atan2` branch cut), runs
//! the analytic backward pass, and compares against central differences at
//! f64. Single ops must agree to 1e-4 relative error, composed pipelines to
//! 1e-3. The `fault` hook corrupts every backward cotangent so callers can
//! prove the comparison actually detects broken gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gradcheck::GradCheck;
use crate::autodiff::{Graph, NodeRef};
use crate::dsp::frame::FrameSpec;
use crate::dsp::graph::{head_to_re_im, istft_nodes, log_mel_nodes, spectral_stack_nodes};
use crate::dsp::mel::MelFilterbank;
use crate::dsp::{Head, PadMode, StftConfig};
use crate::error::Result;
use crate::tensor::Tensor;

/// Relative-error budget for a single operation.
pub const OP_THRESHOLD: f64 = 1e-4;
/// Relative-error budget for composed pipelines.
pub const PIPELINE_THRESHOLD: f64 = 1e-3;

/// Result of one named check.
#[derive(Debug, Clone, Copy)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub threshold: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.threshold
    }
}

/// Smooth values in (−1, 1).
fn smooth(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::random_uniform(shape, -1.0, 1.0, &mut rng)
}

/// Values with `|v| ∈ (min_abs, min_abs + 1)` and random sign — safely away
/// from kinks at zero.
fn signed_off(shape: Vec<usize>, seed: u64, min_abs: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.iter().product::<usize>())
        .map(|_| {
            let mag = min_abs + rng.random::<f64>();
            if rng.random::<f64>() < 0.5 {
                -mag
            } else {
                mag
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("sized to match")
}

/// Values in (lo, lo + 1), strictly positive for sqrt/ln domains.
fn positive(shape: Vec<usize>, seed: u64, lo: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::random_uniform(shape, lo, lo + 1.0, &mut rng)
}

fn sq_mean(g: &mut Graph<f64>, x: NodeRef) -> Result<NodeRef> {
    let sq = g.square(x);
    g.mean_all(sq)
}

/// Run the whole suite. `fault` scales every backward cotangent (see
/// [`GradCheck::fault`]); with it set, a healthy suite must fail everywhere.
pub fn gradcheck_suite(fault: Option<f64>) -> Result<Vec<CheckOutcome>> {
    let checker = GradCheck { eps: 1e-5, fault };
    let mut results = Vec::new();
    let mut op = |name: &'static str, inputs: &[Tensor<f64>], build: &dyn Fn(&mut Graph<f64>, &[NodeRef]) -> Result<NodeRef>|
     -> Result<()> {
        results.push(CheckOutcome {
            name,
            max_rel_err: checker.run(build, inputs)?,
            threshold: OP_THRESHOLD,
        });
        Ok(())
    };

    op("add_broadcast", &[smooth(vec![2, 3, 4], 1), smooth(vec![4], 2)], &|g, xs| {
        let z = g.add(xs[0], xs[1])?;
        sq_mean(g, z)
    })?;
    op("sub_broadcast", &[smooth(vec![2, 3], 3), smooth(vec![1, 3], 4)], &|g, xs| {
        let z = g.sub(xs[0], xs[1])?;
        sq_mean(g, z)
    })?;
    op("mul_broadcast", &[smooth(vec![2, 3], 5), smooth(vec![3], 6)], &|g, xs| {
        let z = g.mul(xs[0], xs[1])?;
        sq_mean(g, z)
    })?;
    op("affine", &[smooth(vec![5], 7)], &|g, xs| {
        let z = g.affine(xs[0], 2.5, -0.7);
        sq_mean(g, z)
    })?;
    op("relu", &[signed_off(vec![3, 4], 8, 0.1)], &|g, xs| {
        let z = g.relu(xs[0]);
        sq_mean(g, z)
    })?;
    op("leaky_relu", &[signed_off(vec![3, 4], 9, 0.1)], &|g, xs| {
        let z = g.leaky_relu(xs[0], 0.1);
        sq_mean(g, z)
    })?;
    op("abs", &[signed_off(vec![6], 10, 0.1)], &|g, xs| {
        let z = g.abs(xs[0]);
        g.mean_all(z)
    })?;
    op("square", &[smooth(vec![2, 5], 11)], &|g, xs| {
        let z = g.square(xs[0]);
        g.mean_all(z)
    })?;
    op("sqrt", &[positive(vec![7], 12, 0.5)], &|g, xs| {
        let z = g.sqrt(xs[0]);
        Ok(g.sum_all(z))
    })?;
    op("ln", &[positive(vec![7], 13, 0.5)], &|g, xs| {
        let z = g.ln(xs[0]);
        Ok(g.sum_all(z))
    })?;
    op("sin", &[smooth(vec![8], 14)], &|g, xs| {
        let z = g.sin(xs[0]);
        sq_mean(g, z)
    })?;
    op("cos", &[smooth(vec![8], 15)], &|g, xs| {
        let z = g.cos(xs[0]);
        sq_mean(g, z)
    })?;
    // Keep x strictly positive: the branch cut lives on the negative x-axis.
    op("atan2", &[signed_off(vec![3, 3], 16, 0.3), positive(vec![3, 3], 17, 0.3)], &|g, xs| {
        let z = g.atan2(xs[0], xs[1])?;
        sq_mean(g, z)
    })?;
    op("clamp_min", &[signed_off(vec![9], 18, 0.1)], &|g, xs| {
        let z = g.clamp_min(xs[0], 0.0);
        sq_mean(g, z)
    })?;
    op("linear", &[smooth(vec![3, 4], 19), smooth(vec![5, 4], 20), smooth(vec![5], 21)], &|g, xs| {
        let z = g.linear(xs[0], xs[1], Some(xs[2]))?;
        sq_mean(g, z)
    })?;
    op(
        "conv2d_3x3",
        &[smooth(vec![2, 3, 5, 4], 22), smooth(vec![2, 3, 3, 3], 23), smooth(vec![2], 24)],
        &|g, xs| {
            let z = g.conv2d(xs[0], xs[1], Some(xs[2]), (1, 1), (1, 1))?;
            sq_mean(g, z)
        },
    )?;
    op(
        "conv2d_strided_5x1",
        &[smooth(vec![1, 2, 12, 3], 25), smooth(vec![2, 2, 5, 1], 26), smooth(vec![2], 27)],
        &|g, xs| {
            let z = g.conv2d(xs[0], xs[1], Some(xs[2]), (3, 1), (2, 0))?;
            sq_mean(g, z)
        },
    )?;
    // The offset keeps every element of d(loss)/dy well away from zero;
    // without it some cotangents are ~1e-8 and drown in differencing noise.
    op(
        "batch_norm_train",
        &[smooth(vec![3, 2, 2, 2], 28), positive(vec![2], 29, 0.5), smooth(vec![2], 30)],
        &|g, xs| {
            let (y, _) = g.batch_norm_train(xs[0], xs[1], xs[2], 1e-5)?;
            let c = g.constant(positive(vec![3, 2, 2, 2], 99, 6.0));
            let shifted = g.add(y, c)?;
            sq_mean(g, shifted)
        },
    )?;
    op(
        "batch_norm_eval",
        &[smooth(vec![2, 2, 3, 2], 31), positive(vec![2], 32, 0.5), smooth(vec![2], 33)],
        &|g, xs| {
            let y = g.batch_norm_eval(xs[0], xs[1], xs[2], &[0.1, -0.2], &[0.9, 1.3], 1e-5)?;
            sq_mean(g, y)
        },
    )?;
    // A fixed inner seed keeps the dropout mask identical across the many
    // builder invocations, making the op deterministic for differencing.
    op("dropout", &[smooth(vec![4, 5], 34)], &|g, xs| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(77);
        let z = g.dropout(xs[0], 0.35, &mut mask_rng)?;
        sq_mean(g, z)
    })?;
    op("rdft", &[smooth(vec![2, 16], 35)], &|g, xs| {
        let z = g.rdft(xs[0])?;
        sq_mean(g, z)
    })?;
    op("irdft", &[smooth(vec![2, 2, 9], 36)], &|g, xs| {
        let z = g.irdft(xs[0])?;
        sq_mean(g, z)
    })?;
    op("frame_reflect", &[smooth(vec![40], 37)], &|g, xs| {
        let z = g.frame(xs[0], FrameSpec { n: 8, hop: 4, pad: PadMode::Reflect })?;
        sq_mean(g, z)
    })?;
    op("frame_zero", &[smooth(vec![40], 38)], &|g, xs| {
        let z = g.frame(xs[0], FrameSpec { n: 8, hop: 4, pad: PadMode::Zero })?;
        sq_mean(g, z)
    })?;
    op("overlap_add", &[smooth(vec![1, 4, 8], 39)], &|g, xs| {
        let z = g.overlap_add(xs[0], 3)?;
        sq_mean(g, z)
    })?;
    op("pad_crop", &[smooth(vec![2, 10], 40)], &|g, xs| {
        let padded = g.pad_last(xs[0], 3, 2)?;
        let cropped = g.crop_last(padded, 1, 12)?;
        sq_mean(g, cropped)
    })?;
    op("concat_slice", &[smooth(vec![2, 3], 41), smooth(vec![2, 2], 42)], &|g, xs| {
        let joined = g.concat(&[xs[0], xs[1]], 1)?;
        let sliced = g.slice_axis(joined, 1, 1, 3)?;
        sq_mean(g, sliced)
    })?;
    op("permute_reshape", &[smooth(vec![2, 3, 4], 43)], &|g, xs| {
        let p = g.permute(xs[0], &[2, 0, 1])?;
        let r = g.reshape(p, vec![4, 6])?;
        sq_mean(g, r)
    })?;
    op("avg_pool1d", &[smooth(vec![1, 2, 16], 44)], &|g, xs| {
        let z = g.avg_pool1d(xs[0], 4, 2, 1)?;
        sq_mean(g, z)
    })?;

    let mut pipeline = |name: &'static str,
                        inputs: &[Tensor<f64>],
                        build: &dyn Fn(&mut Graph<f64>, &[NodeRef]) -> Result<NodeRef>|
     -> Result<()> {
        results.push(CheckOutcome {
            name,
            max_rel_err: checker.run(build, inputs)?,
            threshold: PIPELINE_THRESHOLD,
        });
        Ok(())
    };

    let cfg16 = StftConfig::new(16, 4);
    pipeline("pipeline_stft", &[smooth(vec![1, 100], 50)], &|g, xs| {
        let stack = spectral_stack_nodes(g, xs[0], &cfg16)?;
        sq_mean(g, stack)
    })?;
    pipeline(
        "pipeline_istft",
        &[smooth(vec![1, 9, 6], 51), smooth(vec![1, 9, 6], 52)],
        &|g, xs| {
            let y = istft_nodes(g, xs[0], xs[1], &cfg16, 20)?;
            sq_mean(g, y)
        },
    )?;
    let cfg32 = StftConfig::new(32, 8);
    let fb = MelFilterbank::<f64>::new(6, cfg32.freq_bins(), 8000, 0.0, 4000.0)?;
    pipeline("pipeline_log_mel", &[smooth(vec![1, 120], 53)], &|g, xs| {
        let lm = log_mel_nodes(g, xs[0], &cfg32, &fb)?;
        g.mean_all(lm)
    })?;

    // End-to-end miniature autoencoder with every weight as a leaf:
    // wave → spectral stack → conv/bn/relu → linear encode → linear decode →
    // conv head → iSTFT → time-MSE + 0.1·mel-L1 against the input.
    let pipeline_inputs = [
        smooth(vec![1, 40], 60),        // wave
        smooth(vec![1, 4, 3, 3], 61),   // encoder conv weight
        smooth(vec![1], 62),            // encoder conv bias
        positive(vec![1], 63, 0.5),     // bn gamma
        smooth(vec![1], 64),            // bn beta
        smooth(vec![4, 9], 65),         // encoder projection weight  [dim, bins]
        smooth(vec![4], 66),            // encoder projection bias
        smooth(vec![9, 4], 67),         // decoder projection weight  [bins, dim]
        smooth(vec![9], 68),            // decoder projection bias
        smooth(vec![2, 1, 3, 3], 69),   // head conv weight
        smooth(vec![2], 70),            // head conv bias
    ];
    let fb16 = MelFilterbank::<f64>::new(4, cfg16.freq_bins(), 8000, 0.0, 4000.0)?;
    pipeline("pipeline_autoencoder", &pipeline_inputs, &|g, xs| {
        let wave = xs[0];
        let stack = spectral_stack_nodes(g, wave, &cfg16)?; // [1, 4, 9, 11]
        let h = g.conv2d(stack, xs[1], Some(xs[2]), (1, 1), (1, 1))?;
        let (h, _) = g.batch_norm_train(h, xs[3], xs[4], 1e-5)?;
        let h = g.relu(h); // [1, 1, 9, 11]
        let h = g.reshape(h, vec![1, 9, 11])?;
        let h = g.permute(h, &[0, 2, 1])?; // [1, 11, 9]
        let z = g.linear(h, xs[5], Some(xs[6]))?; // [1, 11, 4]
        let d = g.linear(z, xs[7], Some(xs[8]))?; // [1, 11, 9]
        let d = g.permute(d, &[0, 2, 1])?; // [1, 9, 11]
        let d = g.reshape(d, vec![1, 1, 9, 11])?;
        let raw = g.conv2d(d, xs[9], Some(xs[10]), (1, 1), (1, 1))?; // [1, 2, 9, 11]
        let (re, im) = head_to_re_im(g, raw, Head::Cartesian)?;
        let y = istft_nodes(g, re, im, &cfg16, 40)?;

        let diff = g.sub(y, wave)?;
        let time = sq_mean(g, diff)?;
        let ma = log_mel_nodes(g, y, &cfg16, &fb16)?;
        let mb = log_mel_nodes(g, wave, &cfg16, &fb16)?;
        let md = g.sub(ma, mb)?;
        let mabs = g.abs(md);
        let mel = g.mean_all(mabs)?;
        let mel_scaled = g.affine(mel, 0.1, 0.0);
        g.add(time, mel_scaled)
    })?;

    Ok(results)
}
