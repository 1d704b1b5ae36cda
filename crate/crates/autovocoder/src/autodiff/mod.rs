//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is a tape: every operation evaluates eagerly, appends a node
//! recording its inputs, and [`Graph::backward`] walks the tape in reverse
//! creation order, accumulating cotangents. Nodes are created in topological
//! order by construction, so one reverse sweep visits every dependency after
//! all of its dependents.
//!
//! Model parameters enter a graph through [`Graph::bind`], keyed by their
//! unique name; binding the same parameter twice returns the same node, so
//! shared weights accumulate gradients from every use. A graph is consumed by
//! `backward` — gradients stay readable, further backward calls are state
//! errors.

pub mod gradcheck;
pub mod nn;

use std::collections::HashMap;

use rand::Rng;

use crate::dsp::fft::RealDft;
use crate::dsp::frame::{self, FrameSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

use nn::{BatchStats, Conv2dGeometry};

/// Handle to a node in one specific [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef(usize);

/// Whether a bound parameter receives gradients from this graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bind {
    Trainable,
    Frozen,
}

/// A named, trainable tensor with an optional gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param<T> {
    name: String,
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        Param { name: name.into(), value, grad: None }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        &mut self.value
    }

    pub fn grad(&self) -> Option<&Tensor<T>> {
        self.grad.as_ref()
    }

    pub fn accumulate_grad(&mut self, delta: &Tensor<T>) -> Result<()> {
        match &mut self.grad {
            Some(g) => g.add_assign(delta),
            slot => {
                if delta.shape() != self.value.shape() {
                    return Err(Error::shape(format!(
                        "gradient shape {:?} does not match parameter {} shape {:?}",
                        delta.shape(),
                        self.name,
                        self.value.shape()
                    )));
                }
                *slot = Some(delta.clone());
                Ok(())
            }
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }
}

enum Op<T> {
    Leaf,
    Add(NodeRef, NodeRef),
    Sub(NodeRef, NodeRef),
    Mul(NodeRef, NodeRef),
    /// `a·x + b` with scalar constants.
    Affine { x: NodeRef, a: T },
    Relu(NodeRef),
    LeakyRelu { x: NodeRef, slope: T },
    Abs(NodeRef),
    Square(NodeRef),
    Sqrt(NodeRef),
    Ln(NodeRef),
    Sin(NodeRef),
    Cos(NodeRef),
    Atan2 { y: NodeRef, x: NodeRef },
    ClampMin { x: NodeRef, floor: T },
    SumAll(NodeRef),
    MeanAll(NodeRef),
    Linear { x: NodeRef, w: NodeRef, b: Option<NodeRef> },
    Conv2d { x: NodeRef, w: NodeRef, b: Option<NodeRef>, geo: Conv2dGeometry },
    BatchNormTrain { x: NodeRef, gamma: NodeRef, beta: NodeRef, stats: BatchStats<T> },
    BatchNormEval { x: NodeRef, gamma: NodeRef, beta: NodeRef, mean: Vec<T>, invstd: Vec<T> },
    Dropout { x: NodeRef, mask: Tensor<T> },
    Rdft { x: NodeRef, n: usize },
    Irdft { x: NodeRef, n: usize },
    Frame { x: NodeRef, spec: FrameSpec, in_len: usize },
    OverlapAdd { x: NodeRef, t: usize, n: usize, hop: usize },
    CropLast { x: NodeRef, start: usize },
    PadLast { x: NodeRef, left: usize },
    Concat { xs: Vec<NodeRef>, axis: usize },
    SliceAxis { x: NodeRef, axis: usize, start: usize },
    Permute { x: NodeRef, perm: Vec<usize> },
    Reshape { x: NodeRef },
    AvgPool1d { x: NodeRef, kernel: usize, stride: usize, padding: usize },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Eagerly evaluated computation tape.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    bindings: HashMap<String, (NodeRef, bool)>,
    grads: Vec<Option<Tensor<T>>>,
    consumed: bool,
    fault_scale: Option<T>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            bindings: HashMap::new(),
            grads: Vec::new(),
            consumed: false,
            fault_scale: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, n: NodeRef) -> &Tensor<T> {
        &self.nodes[n.0].value
    }

    pub fn shape(&self, n: NodeRef) -> &[usize] {
        self.nodes[n.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> NodeRef {
        self.nodes.push(Node { value, op, requires_grad });
        NodeRef(self.nodes.len() - 1)
    }

    fn rg(&self, n: NodeRef) -> bool {
        self.nodes[n.0].requires_grad
    }

    /// A node with no gradient, for inputs and fixed tensors.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeRef {
        self.push(value, Op::Leaf, false)
    }

    /// An anonymous differentiable leaf (used by the gradient checker).
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeRef {
        self.push(value, Op::Leaf, true)
    }

    /// Bind a named parameter. Repeated binds of one name return the same
    /// node; one name cannot be both trainable and frozen in a single graph.
    pub fn bind(&mut self, param: &Param<T>, bind: Bind) -> Result<NodeRef> {
        let trainable = bind == Bind::Trainable;
        if let Some(&(node, was_trainable)) = self.bindings.get(param.name()) {
            if was_trainable != trainable {
                return Err(Error::State(format!(
                    "parameter {} bound both trainable and frozen in one graph",
                    param.name()
                )));
            }
            return Ok(node);
        }
        let node = self.push(param.value().clone(), Op::Leaf, trainable);
        self.bindings.insert(param.name().to_string(), (node, trainable));
        Ok(node)
    }

    // -- elementwise and broadcast arithmetic --------------------------------

    pub fn add(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let value = broadcast_zip("add", self.value(a), self.value(b), |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let value = broadcast_zip("sub", self.value(a), self.value(b), |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let value = broadcast_zip("mul", self.value(a), self.value(b), |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// `a·x + b` with plain scalars.
    pub fn affine(&mut self, x: NodeRef, a: T, b: T) -> NodeRef {
        let value = self.value(x).map(|v| a * v + b);
        let rg = self.rg(x);
        self.push(value, Op::Affine { x, a }, rg)
    }

    pub fn relu(&mut self, x: NodeRef) -> NodeRef {
        let value = self.value(x).map(|v| v.max(T::zero()));
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn leaky_relu(&mut self, x: NodeRef, slope: T) -> NodeRef {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { slope * v });
        let rg = self.rg(x);
        self.push(value, Op::LeakyRelu { x, slope }, rg)
    }

    pub fn abs(&mut self, x: NodeRef) -> NodeRef {
        let value = self.value(x).map(|v| v.abs());
        let rg = self.rg(x);
        self.push(value, Op::Abs(x), rg)
    }

    pub fn square(&mut self, x: NodeRef) -> NodeRef {
        let value = self.value(x).map(|v| v * v);
        let rg = self.rg(x);
        self.push(value, Op::Square(x), rg)
    }

    /// Gradient at 0 is defined as 0.
    pub fn sqrt(&mut self, x: NodeRef) -> NodeRef {
        let value = self.value(x).map(|v| v.sqrt());
        let rg = self.rg(x);
        self.push(value, Op::Sqrt(x), rg)
    }

    pub fn ln(&mut self, x: NodeRef) -> NodeRef {
        let value = self.value(x).map(|v| v.ln());
        let rg = self.rg(x);
        self.push(value, Op::Ln(x), rg)
    }

    pub fn sin(&mut self, x: NodeRef) -> NodeRef {
        let value = self.value(x).map(|v| v.sin());
        let rg = self.rg(x);
        self.push(value, Op::Sin(x), rg)
    }

    pub fn cos(&mut self, x: NodeRef) -> NodeRef {
        let value = self.value(x).map(|v| v.cos());
        let rg = self.rg(x);
        self.push(value, Op::Cos(x), rg)
    }

    /// Four-quadrant arctangent; both gradients are defined as 0 at the origin.
    pub fn atan2(&mut self, y: NodeRef, x: NodeRef) -> Result<NodeRef> {
        if self.shape(y) != self.shape(x) {
            return Err(Error::shape(format!(
                "atan2 shapes differ: {:?} vs {:?}",
                self.shape(y),
                self.shape(x)
            )));
        }
        let data = self
            .value(y)
            .data()
            .iter()
            .zip(self.value(x).data())
            .map(|(&yv, &xv)| {
                if yv.is_zero() && xv.is_zero() {
                    T::zero()
                } else {
                    yv.atan2(xv)
                }
            })
            .collect();
        let value = Tensor::from_vec(self.shape(y).to_vec(), data)?;
        let rg = self.rg(y) || self.rg(x);
        Ok(self.push(value, Op::Atan2 { y, x }, rg))
    }

    /// `max(x, floor)`; gradient passes only where `x > floor`.
    pub fn clamp_min(&mut self, x: NodeRef, floor: T) -> NodeRef {
        let value = self.value(x).map(|v| v.max(floor));
        let rg = self.rg(x);
        self.push(value, Op::ClampMin { x, floor }, rg)
    }

    pub fn sum_all(&mut self, x: NodeRef) -> NodeRef {
        let total = self.value(x).data().iter().copied().sum::<T>();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::SumAll(x), rg)
    }

    pub fn mean_all(&mut self, x: NodeRef) -> Result<NodeRef> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let total = self.value(x).data().iter().copied().sum::<T>() / T::of_usize(n);
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(total), Op::MeanAll(x), rg))
    }

    // -- dense layers ---------------------------------------------------------

    /// `x [..., in] · wᵀ + b` with `w [out, in]`.
    pub fn linear(&mut self, x: NodeRef, w: NodeRef, b: Option<NodeRef>) -> Result<NodeRef> {
        let value =
            nn::linear_forward(self.value(x), self.value(w), b.map(|n| self.value(n)))?;
        let rg = self.rg(x) || self.rg(w) || b.map(|n| self.rg(n)).unwrap_or(false);
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    /// Cross-correlating convolution over `x [b, c, h, w]`.
    pub fn conv2d(
        &mut self,
        x: NodeRef,
        w: NodeRef,
        b: Option<NodeRef>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<NodeRef> {
        let geo = Conv2dGeometry::resolve(
            self.value(x),
            self.value(w),
            b.map(|n| self.value(n)),
            stride,
            padding,
        )?;
        let value =
            nn::conv2d_forward(self.value(x), self.value(w), b.map(|n| self.value(n)), &geo);
        let rg = self.rg(x) || self.rg(w) || b.map(|n| self.rg(n)).unwrap_or(false);
        Ok(self.push(value, Op::Conv2d { x, w, b, geo }, rg))
    }

    /// Batch normalization using batch statistics; also returns those
    /// statistics so the caller can update its running averages.
    pub fn batch_norm_train(
        &mut self,
        x: NodeRef,
        gamma: NodeRef,
        beta: NodeRef,
        eps: T,
    ) -> Result<(NodeRef, BatchStats<T>)> {
        let (value, stats) = nn::batchnorm_train_forward(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
            eps,
        )?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let node =
            self.push(value, Op::BatchNormTrain { x, gamma, beta, stats: stats.clone() }, rg);
        Ok((node, stats))
    }

    /// Batch normalization with fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: NodeRef,
        gamma: NodeRef,
        beta: NodeRef,
        running_mean: &[T],
        running_var: &[T],
        eps: T,
    ) -> Result<NodeRef> {
        let (value, invstd) = nn::batchnorm_eval_forward(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
            running_mean,
            running_var,
            eps,
        )?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            value,
            Op::BatchNormEval { x, gamma, beta, mean: running_mean.to_vec(), invstd },
            rg,
        ))
    }

    /// Inverted dropout: each element is kept iff its uniform draw `u ≥ p`,
    /// and kept elements are scaled by `1/(1−p)`. `p ≥ 1` zeroes everything.
    pub fn dropout(&mut self, x: NodeRef, p: f64, rng: &mut impl Rng) -> Result<NodeRef> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout probability {p} outside [0, 1]")));
        }
        let scale = if p >= 1.0 { T::zero() } else { T::of_f64(1.0 / (1.0 - p)) };
        let mask_data: Vec<T> = (0..self.value(x).len())
            .map(|_| {
                let u: f64 = rng.random();
                if p >= 1.0 || u < p {
                    T::zero()
                } else {
                    scale
                }
            })
            .collect();
        let mask = Tensor::from_vec(self.shape(x).to_vec(), mask_data)?;
        let data =
            self.value(x).data().iter().zip(mask.data()).map(|(&a, &m)| a * m).collect();
        let value = Tensor::from_vec(self.shape(x).to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    // -- spectral ops ---------------------------------------------------------

    /// Real DFT of each trailing row: `[..., n] → [..., 2, n/2+1]`.
    pub fn rdft(&mut self, x: NodeRef) -> Result<NodeRef> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| Error::shape("rdft needs ≥ 1 dim"))?;
        if n < 2 || n % 2 != 0 {
            return Err(Error::invalid(format!("rdft length must be even and ≥ 2, got {n}")));
        }
        let rows = self.value(x).len() / n;
        let dft = RealDft::new(n);
        let data = dft.rdft_rows(self.value(x).data(), rows);
        let mut out_shape = shape[..shape.len() - 1].to_vec();
        out_shape.extend([2, dft.bins()]);
        let value = Tensor::from_vec(out_shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Rdft { x, n }, rg))
    }

    /// Hermitian inverse DFT: `[..., 2, f] → [..., 2(f−1)]`, with `1/n`.
    pub fn irdft(&mut self, x: NodeRef) -> Result<NodeRef> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 || shape[shape.len() - 2] != 2 {
            return Err(Error::shape(format!("irdft expects [..., 2, f], got {shape:?}")));
        }
        let f = shape[shape.len() - 1];
        if f < 2 {
            return Err(Error::invalid(format!("irdft needs ≥ 2 bins, got {f}")));
        }
        let n = 2 * (f - 1);
        let rows = self.value(x).len() / (2 * f);
        let dft = RealDft::new(n);
        let data = dft.irdft_rows(self.value(x).data(), rows);
        let mut out_shape = shape[..shape.len() - 2].to_vec();
        out_shape.push(n);
        let value = Tensor::from_vec(out_shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Irdft { x, n }, rg))
    }

    /// Centered framing of each trailing signal: `[..., len] → [..., t, n]`.
    pub fn frame(&mut self, x: NodeRef, spec: FrameSpec) -> Result<NodeRef> {
        let shape = self.shape(x).to_vec();
        let len = *shape.last().ok_or_else(|| Error::shape("frame needs ≥ 1 dim"))?;
        spec.validate(len)?;
        let t = spec.num_frames(len);
        let rows = self.value(x).len() / len;
        let mut data = Vec::with_capacity(rows * t * spec.n);
        for r in 0..rows {
            data.extend(frame::frame_signal(
                &self.value(x).data()[r * len..(r + 1) * len],
                spec,
            )?);
        }
        let mut out_shape = shape[..shape.len() - 1].to_vec();
        out_shape.extend([t, spec.n]);
        let value = Tensor::from_vec(out_shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Frame { x, spec, in_len: len }, rg))
    }

    /// Overlap-add of trailing `[t, n]` frames: `[..., t, n] → [..., (t−1)·hop + n]`.
    pub fn overlap_add(&mut self, x: NodeRef, hop: usize) -> Result<NodeRef> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(Error::shape(format!("overlap_add expects [..., t, n], got {shape:?}")));
        }
        let (t, n) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let rows = self.value(x).len() / (t * n);
        let out_len = (t - 1) * hop + n;
        let mut data = Vec::with_capacity(rows * out_len);
        for r in 0..rows {
            data.extend(frame::overlap_add(
                &self.value(x).data()[r * t * n..(r + 1) * t * n],
                t,
                n,
                hop,
            )?);
        }
        let mut out_shape = shape[..shape.len() - 2].to_vec();
        out_shape.push(out_len);
        let value = Tensor::from_vec(out_shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::OverlapAdd { x, t, n, hop }, rg))
    }

    // -- structural ops -------------------------------------------------------

    /// Keep `[start, start+len)` of the last axis.
    pub fn crop_last(&mut self, x: NodeRef, start: usize, len: usize) -> Result<NodeRef> {
        let shape = self.shape(x).to_vec();
        let last = *shape.last().ok_or_else(|| Error::shape("crop needs ≥ 1 dim"))?;
        if start + len > last {
            return Err(Error::shape(format!(
                "crop [{start}, {}) exceeds axis of size {last}",
                start + len
            )));
        }
        let rows = self.value(x).len() / last;
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&self.value(x).data()[r * last + start..r * last + start + len]);
        }
        let mut out_shape = shape[..shape.len() - 1].to_vec();
        out_shape.push(len);
        let value = Tensor::from_vec(out_shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::CropLast { x, start }, rg))
    }

    /// Zero-pad the last axis by `left` and `right`.
    pub fn pad_last(&mut self, x: NodeRef, left: usize, right: usize) -> Result<NodeRef> {
        let shape = self.shape(x).to_vec();
        let last = *shape.last().ok_or_else(|| Error::shape("pad needs ≥ 1 dim"))?;
        let out_last = left + last + right;
        let rows = self.value(x).len() / last.max(1);
        let mut data = vec![T::zero(); rows * out_last];
        for r in 0..rows {
            data[r * out_last + left..r * out_last + left + last]
                .copy_from_slice(&self.value(x).data()[r * last..(r + 1) * last]);
        }
        let mut out_shape = shape[..shape.len() - 1].to_vec();
        out_shape.push(out_last);
        let value = Tensor::from_vec(out_shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::PadLast { x, left }, rg))
    }

    /// Concatenate along `axis`; all other dims must match.
    pub fn concat(&mut self, xs: &[NodeRef], axis: usize) -> Result<NodeRef> {
        if xs.is_empty() {
            return Err(Error::invalid("concat of zero tensors"));
        }
        let first = self.shape(xs[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::shape(format!("concat axis {axis} out of range for {first:?}")));
        }
        let mut axis_total = 0usize;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != first.len()
                || s.iter().zip(&first).enumerate().any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(Error::shape(format!(
                    "concat shapes incompatible: {:?} vs {:?} along axis {axis}",
                    s, first
                )));
            }
            axis_total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let mut data = vec![T::zero(); outer * axis_total * inner];
        let mut offset = 0usize;
        for &x in xs {
            let d = self.shape(x)[axis];
            let src = self.value(x).data();
            for o in 0..outer {
                let dst_base = (o * axis_total + offset) * inner;
                let src_base = o * d * inner;
                data[dst_base..dst_base + d * inner]
                    .copy_from_slice(&src[src_base..src_base + d * inner]);
            }
            offset += d;
        }
        let value = Tensor::from_vec(out_shape, data)?;
        let rg = xs.iter().any(|&x| self.rg(x));
        Ok(self.push(value, Op::Concat { xs: xs.to_vec(), axis }, rg))
    }

    /// Keep `[start, start+len)` of `axis`.
    pub fn slice_axis(
        &mut self,
        x: NodeRef,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<NodeRef> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(format!("slice axis {axis} out of range for {shape:?}")));
        }
        if start + len > shape[axis] {
            return Err(Error::shape(format!(
                "slice [{start}, {}) exceeds axis of size {}",
                start + len,
                shape[axis]
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let d = shape[axis];
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * d + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let value = Tensor::from_vec(out_shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::SliceAxis { x, axis, start }, rg))
    }

    /// Reorder axes: `out.shape[d] = in.shape[perm[d]]`.
    pub fn permute(&mut self, x: NodeRef, perm: &[usize]) -> Result<NodeRef> {
        let value = permute_tensor(self.value(x), perm)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Permute { x, perm: perm.to_vec() }, rg))
    }

    pub fn reshape(&mut self, x: NodeRef, shape: Vec<usize>) -> Result<NodeRef> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Average pooling over the last axis of `[b, c, w]`, zero-padded edges
    /// counted in the mean.
    pub fn avg_pool1d(
        &mut self,
        x: NodeRef,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<NodeRef> {
        let value = nn::avg_pool1d_forward(self.value(x), kernel, stride, padding)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::AvgPool1d { x, kernel, stride, padding }, rg))
    }

    // -- backward -------------------------------------------------------------

    /// Test hook: scales the seed cotangent so every computed gradient is
    /// deliberately wrong by the same factor.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, scale: T) {
        self.fault_scale = Some(scale);
    }

    /// Reverse sweep from a scalar `loss`. Consumes the graph: gradients stay
    /// readable afterwards, a second call is a state error.
    pub fn backward(&mut self, loss: NodeRef) -> Result<()> {
        if self.consumed {
            return Err(Error::State("backward called twice on one graph".into()));
        }
        let lnode = &self.nodes[loss.0];
        if lnode.value.len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                lnode.value.shape()
            )));
        }
        self.consumed = true;
        self.grads = vec![None; self.nodes.len()];
        let seed = self.fault_scale.unwrap_or_else(T::one);
        self.grads[loss.0] = Some(Tensor::filled(lnode.value.shape().to_vec(), seed));

        for i in (0..=loss.0).rev() {
            if self.grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let (before, rest) = self.grads.split_at_mut(i);
            let g = rest[0].as_ref().expect("checked above");
            backward_op(&self.nodes, i, g, before)?;
        }
        Ok(())
    }

    /// Gradient of the loss w.r.t. a node, after `backward`.
    pub fn grad(&self, n: NodeRef) -> Option<&Tensor<T>> {
        self.grads.get(n.0).and_then(|g| g.as_ref())
    }

    /// Gradient for a bound trainable parameter, after `backward`.
    pub fn param_grad(&self, name: &str) -> Option<&Tensor<T>> {
        let &(node, trainable) = self.bindings.get(name)?;
        if !trainable {
            return None;
        }
        self.grad(node)
    }
}

fn acc<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Tensor<T>>],
    target: NodeRef,
    delta: Tensor<T>,
) {
    if !nodes[target.0].requires_grad {
        return;
    }
    match &mut grads[target.0] {
        Some(t) => t.add_assign(&delta).expect("gradient shapes agree by construction"),
        slot => *slot = Some(delta),
    }
}

fn backward_op<T: Scalar>(
    nodes: &[Node<T>],
    i: usize,
    g: &Tensor<T>,
    grads: &mut [Option<Tensor<T>>],
) -> Result<()> {
    let out = &nodes[i].value;
    let val = |n: NodeRef| &nodes[n.0].value;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            acc(nodes, grads, *a, reduce_to_shape(g, val(*a).shape()));
            acc(nodes, grads, *b, reduce_to_shape(g, val(*b).shape()));
        }
        Op::Sub(a, b) => {
            acc(nodes, grads, *a, reduce_to_shape(g, val(*a).shape()));
            let neg = g.map(|v| -v);
            acc(nodes, grads, *b, reduce_to_shape(&neg, val(*b).shape()));
        }
        Op::Mul(a, b) => {
            if nodes[a.0].requires_grad {
                let term = broadcast_zip("mul-bwd", g, val(*b), |gv, bv| gv * bv)?;
                acc(nodes, grads, *a, reduce_to_shape(&term, val(*a).shape()));
            }
            if nodes[b.0].requires_grad {
                let term = broadcast_zip("mul-bwd", g, val(*a), |gv, av| gv * av)?;
                acc(nodes, grads, *b, reduce_to_shape(&term, val(*b).shape()));
            }
        }
        Op::Affine { x, a } => {
            let a = *a;
            acc(nodes, grads, *x, g.map(|v| a * v));
        }
        Op::Relu(x) => {
            let dx = zip_map(g, out, |gv, ov| if ov > T::zero() { gv } else { T::zero() });
            acc(nodes, grads, *x, dx);
        }
        Op::LeakyRelu { x, slope } => {
            let s = *slope;
            let dx = zip_map(g, val(*x), |gv, xv| if xv > T::zero() { gv } else { s * gv });
            acc(nodes, grads, *x, dx);
        }
        Op::Abs(x) => {
            let dx = zip_map(g, val(*x), |gv, xv| {
                if xv > T::zero() {
                    gv
                } else if xv < T::zero() {
                    -gv
                } else {
                    T::zero()
                }
            });
            acc(nodes, grads, *x, dx);
        }
        Op::Square(x) => {
            let two = T::of_f64(2.0);
            let dx = zip_map(g, val(*x), |gv, xv| two * gv * xv);
            acc(nodes, grads, *x, dx);
        }
        Op::Sqrt(x) => {
            let half = T::of_f64(0.5);
            let dx = zip_map(g, out, |gv, ov| if ov > T::zero() { half * gv / ov } else { T::zero() });
            acc(nodes, grads, *x, dx);
        }
        Op::Ln(x) => {
            let dx = zip_map(g, val(*x), |gv, xv| gv / xv);
            acc(nodes, grads, *x, dx);
        }
        Op::Sin(x) => {
            let dx = zip_map(g, val(*x), |gv, xv| gv * xv.cos());
            acc(nodes, grads, *x, dx);
        }
        Op::Cos(x) => {
            let dx = zip_map(g, val(*x), |gv, xv| -gv * xv.sin());
            acc(nodes, grads, *x, dx);
        }
        Op::Atan2 { y, x } => {
            let (yv, xv) = (val(*y), val(*x));
            if nodes[y.0].requires_grad {
                let dy = zip3_map(g, yv, xv, |gv, a, b| {
                    let d = a * a + b * b;
                    if d.is_zero() {
                        T::zero()
                    } else {
                        gv * b / d
                    }
                });
                acc(nodes, grads, *y, dy);
            }
            if nodes[x.0].requires_grad {
                let dx = zip3_map(g, yv, xv, |gv, a, b| {
                    let d = a * a + b * b;
                    if d.is_zero() {
                        T::zero()
                    } else {
                        -gv * a / d
                    }
                });
                acc(nodes, grads, *x, dx);
            }
        }
        Op::ClampMin { x, floor } => {
            let f = *floor;
            let dx = zip_map(g, val(*x), |gv, xv| if xv > f { gv } else { T::zero() });
            acc(nodes, grads, *x, dx);
        }
        Op::SumAll(x) => {
            let gv = g.data()[0];
            acc(nodes, grads, *x, Tensor::filled(val(*x).shape().to_vec(), gv));
        }
        Op::MeanAll(x) => {
            let gv = g.data()[0] / T::of_usize(val(*x).len());
            acc(nodes, grads, *x, Tensor::filled(val(*x).shape().to_vec(), gv));
        }
        Op::Linear { x, w, b } => {
            let (dx, dw, db) = nn::linear_backward(val(*x), val(*w), g);
            acc(nodes, grads, *x, dx);
            acc(nodes, grads, *w, dw);
            if let Some(b) = b {
                acc(nodes, grads, *b, db);
            }
        }
        Op::Conv2d { x, w, b, geo } => {
            let (dx, dw, db) = nn::conv2d_backward(val(*x), val(*w), g, geo);
            acc(nodes, grads, *x, dx);
            acc(nodes, grads, *w, dw);
            if let Some(b) = b {
                acc(nodes, grads, *b, db);
            }
        }
        Op::BatchNormTrain { x, gamma, beta, stats } => {
            let (dx, dgamma, dbeta) =
                nn::batchnorm_train_backward(val(*x), val(*gamma).data(), stats, g);
            acc(nodes, grads, *x, dx);
            acc(nodes, grads, *gamma, dgamma);
            acc(nodes, grads, *beta, dbeta);
        }
        Op::BatchNormEval { x, gamma, beta, mean, invstd } => {
            let (dx, dgamma, dbeta) =
                nn::batchnorm_eval_backward(val(*x), val(*gamma).data(), mean, invstd, g);
            acc(nodes, grads, *x, dx);
            acc(nodes, grads, *gamma, dgamma);
            acc(nodes, grads, *beta, dbeta);
        }
        Op::Dropout { x, mask } => {
            let dx = zip_map(g, mask, |gv, mv| gv * mv);
            acc(nodes, grads, *x, dx);
        }
        Op::Rdft { x, n } => {
            let f = n / 2 + 1;
            let rows = g.len() / (2 * f);
            let dft = RealDft::new(*n);
            let dx = dft.rdft_adjoint_rows(g.data(), rows);
            acc(nodes, grads, *x, Tensor::from_vec(val(*x).shape().to_vec(), dx)?);
        }
        Op::Irdft { x, n } => {
            let rows = g.len() / n;
            let dft = RealDft::new(*n);
            let dx = dft.irdft_adjoint_rows(g.data(), rows);
            acc(nodes, grads, *x, Tensor::from_vec(val(*x).shape().to_vec(), dx)?);
        }
        Op::Frame { x, spec, in_len } => {
            let t = spec.num_frames(*in_len);
            let rows = val(*x).len() / in_len;
            let mut dx = Vec::with_capacity(val(*x).len());
            for r in 0..rows {
                dx.extend(frame::frame_signal_adjoint(
                    &g.data()[r * t * spec.n..(r + 1) * t * spec.n],
                    *in_len,
                    *spec,
                )?);
            }
            acc(nodes, grads, *x, Tensor::from_vec(val(*x).shape().to_vec(), dx)?);
        }
        Op::OverlapAdd { x, t, n, hop } => {
            let out_len = (*t - 1) * hop + n;
            let rows = val(*x).len() / (t * n);
            let mut dx = Vec::with_capacity(val(*x).len());
            for r in 0..rows {
                dx.extend(frame::overlap_add_adjoint(
                    &g.data()[r * out_len..(r + 1) * out_len],
                    *t,
                    *n,
                    *hop,
                )?);
            }
            acc(nodes, grads, *x, Tensor::from_vec(val(*x).shape().to_vec(), dx)?);
        }
        Op::CropLast { x, start } => {
            let xs = val(*x).shape();
            let last = *xs.last().unwrap();
            let len = *out.shape().last().unwrap();
            let rows = val(*x).len() / last;
            let mut dx = vec![T::zero(); val(*x).len()];
            for r in 0..rows {
                dx[r * last + start..r * last + start + len]
                    .copy_from_slice(&g.data()[r * len..(r + 1) * len]);
            }
            acc(nodes, grads, *x, Tensor::from_vec(xs.to_vec(), dx)?);
        }
        Op::PadLast { x, left } => {
            let xs = val(*x).shape();
            let last = *xs.last().unwrap();
            let out_last = *out.shape().last().unwrap();
            let rows = val(*x).len() / last.max(1);
            let mut dx = Vec::with_capacity(val(*x).len());
            for r in 0..rows {
                dx.extend_from_slice(&g.data()[r * out_last + left..r * out_last + left + last]);
            }
            acc(nodes, grads, *x, Tensor::from_vec(xs.to_vec(), dx)?);
        }
        Op::Concat { xs, axis } => {
            let out_shape = out.shape();
            let outer: usize = out_shape[..*axis].iter().product();
            let inner: usize = out_shape[*axis + 1..].iter().product();
            let axis_total = out_shape[*axis];
            let mut offset = 0usize;
            for &x in xs {
                if nodes[x.0].requires_grad {
                    let d = val(x).shape()[*axis];
                    let mut dx = Vec::with_capacity(val(x).len());
                    for o in 0..outer {
                        let base = (o * axis_total + offset) * inner;
                        dx.extend_from_slice(&g.data()[base..base + d * inner]);
                    }
                    acc(nodes, grads, x, Tensor::from_vec(val(x).shape().to_vec(), dx)?);
                }
                offset += val(x).shape()[*axis];
            }
        }
        Op::SliceAxis { x, axis, start } => {
            let xs = val(*x).shape();
            let outer: usize = xs[..*axis].iter().product();
            let inner: usize = xs[*axis + 1..].iter().product();
            let d = xs[*axis];
            let len = out.shape()[*axis];
            let mut dx = vec![T::zero(); val(*x).len()];
            for o in 0..outer {
                let dst = (o * d + start) * inner;
                let src = o * len * inner;
                dx[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
            }
            acc(nodes, grads, *x, Tensor::from_vec(xs.to_vec(), dx)?);
        }
        Op::Permute { x, perm } => {
            let mut inv = vec![0usize; perm.len()];
            for (d, &p) in perm.iter().enumerate() {
                inv[p] = d;
            }
            acc(nodes, grads, *x, permute_tensor(g, &inv)?);
        }
        Op::Reshape { x } => {
            acc(nodes, grads, *x, g.clone().reshape(val(*x).shape().to_vec())?);
        }
        Op::AvgPool1d { x, kernel, stride, padding } => {
            let dx = nn::avg_pool1d_backward(val(*x).shape(), g, *kernel, *stride, *padding);
            acc(nodes, grads, *x, dx);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Broadcasting helpers

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape().to_vec(), data).expect("zip shape")
}

fn zip3_map<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    f: impl Fn(T, T, T) -> T,
) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(c.data())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Tensor::from_vec(a.shape().to_vec(), data).expect("zip shape")
}

/// Shape of `a ∘ b` under right-aligned broadcasting, or a shape error.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0usize; nd];
    for d in 0..nd {
        let av = if d + a.len() >= nd { a[d + a.len() - nd] } else { 1 };
        let bv = if d + b.len() >= nd { b[d + b.len() - nd] } else { 1 };
        out[d] = match (av, bv) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::shape(format!(
                    "shapes {a:?} and {b:?} do not broadcast"
                )))
            }
        };
    }
    Ok(out)
}

fn broadcast_zip<T: Scalar>(
    what: &str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        return Ok(zip_map(a, b, f));
    }
    let out_shape = broadcast_shape(a.shape(), b.shape())
        .map_err(|_| Error::shape(format!("{what}: shapes {:?} and {:?} do not broadcast", a.shape(), b.shape())))?;

    // Fast path: one operand is a right-aligned full suffix of the other,
    // e.g. [b, t, n] ∘ [n] — it tiles with a fixed period.
    let suffix = |big: &Tensor<T>, small: &Tensor<T>| -> bool {
        big.shape().len() >= small.shape().len()
            && big.shape()[big.shape().len() - small.shape().len()..] == *small.shape()
            && big.shape() == out_shape.as_slice()
    };
    if suffix(a, b) {
        let period = b.len().max(1);
        let data =
            a.data().iter().enumerate().map(|(i, &x)| f(x, b.data()[i % period])).collect();
        return Tensor::from_vec(out_shape, data);
    }
    if suffix(b, a) {
        let period = a.len().max(1);
        let data =
            b.data().iter().enumerate().map(|(i, &y)| f(a.data()[i % period], y)).collect();
        return Tensor::from_vec(out_shape, data);
    }

    // General strided walk.
    let nd = out_shape.len();
    let stride_for = |t: &Tensor<T>| -> Vec<usize> {
        let mut strides = vec![0usize; nd];
        let mut s = 1usize;
        for d in (0..t.ndim()).rev() {
            let od = d + nd - t.ndim();
            strides[od] = if t.shape()[d] == 1 && out_shape[od] != 1 { 0 } else { s };
            s *= t.shape()[d];
        }
        strides
    };
    let (sa, sb) = (stride_for(a), stride_for(b));
    let n_out = numel(&out_shape);
    let mut data = Vec::with_capacity(n_out);
    let mut idx = vec![0usize; nd];
    for _ in 0..n_out {
        let (mut ia, mut ib) = (0usize, 0usize);
        for d in 0..nd {
            ia += idx[d] * sa[d];
            ib += idx[d] * sb[d];
        }
        data.push(f(a.data()[ia], b.data()[ib]));
        for d in (0..nd).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::from_vec(out_shape, data)
}

/// Sum `g` down to `target` by collapsing broadcast axes.
fn reduce_to_shape<T: Scalar>(g: &Tensor<T>, target: &[usize]) -> Tensor<T> {
    if g.shape() == target {
        return g.clone();
    }
    let nd = g.ndim();
    let pad = nd - target.len();
    let mut out = Tensor::zeros(target.to_vec());
    let tstrides: Vec<usize> = {
        let mut s = vec![0usize; nd];
        let mut acc = 1usize;
        for d in (0..target.len()).rev() {
            s[d + pad] = if target[d] == 1 { 0 } else { acc };
            acc *= target[d];
        }
        s
    };
    let gshape = g.shape().to_vec();
    let mut idx = vec![0usize; nd];
    for &gv in g.data() {
        let mut ti = 0usize;
        for d in 0..nd {
            ti += idx[d] * tstrides[d];
        }
        out.data_mut()[ti] += gv;
        for d in (0..nd).rev() {
            idx[d] += 1;
            if idx[d] < gshape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// Axis reorder used by the `Permute` op and its adjoint.
fn permute_tensor<T: Scalar>(x: &Tensor<T>, perm: &[usize]) -> Result<Tensor<T>> {
    let nd = x.ndim();
    if perm.len() != nd {
        return Err(Error::shape(format!(
            "permutation {perm:?} does not match rank {nd}"
        )));
    }
    let mut seen = vec![false; nd];
    for &p in perm {
        if p >= nd || seen[p] {
            return Err(Error::shape(format!("{perm:?} is not a permutation of 0..{nd}")));
        }
        seen[p] = true;
    }
    let in_shape = x.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let mut in_strides = vec![1usize; nd];
    for d in (0..nd.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * in_shape[d + 1];
    }
    let mut data = Vec::with_capacity(x.len());
    let mut idx = vec![0usize; nd];
    for _ in 0..x.len() {
        let mut src = 0usize;
        for d in 0..nd {
            src += idx[d] * in_strides[perm[d]];
        }
        data.push(x.data()[src]);
        for d in (0..nd).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::from_vec(out_shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_through_shared_binding_accumulates() {
        // loss = sum(p·p) with p bound once and used twice → dp = 2p.
        let p = Param::new("p", Tensor::from_vec(vec![3], vec![1.0f64, -2.0, 0.5]).unwrap());
        let mut g = Graph::new();
        let a = g.bind(&p, Bind::Trainable).unwrap();
        let b = g.bind(&p, Bind::Trainable).unwrap();
        assert_eq!(a, b);
        let prod = g.mul(a, b).unwrap();
        let loss = g.sum_all(prod);
        g.backward(loss).unwrap();
        let grad = g.param_grad("p").unwrap();
        for (gv, pv) in grad.data().iter().zip(p.value().data()) {
            assert!((gv - 2.0 * pv).abs() < 1e-12);
        }
    }

    #[test]
    fn second_backward_is_a_state_error() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::scalar(2.0));
        let y = g.square(x);
        g.backward(y).unwrap();
        match g.backward(y) {
            Err(Error::State(_)) => {}
            other => panic!("expected state error, got {other:?}"),
        }
    }

    #[test]
    fn conflicting_bind_modes_are_rejected() {
        let p = Param::new("w", Tensor::<f64>::zeros(vec![2]));
        let mut g = Graph::new();
        g.bind(&p, Bind::Trainable).unwrap();
        assert!(g.bind(&p, Bind::Frozen).is_err());
    }

    #[test]
    fn frozen_bindings_receive_no_gradient() {
        let p = Param::new("w", Tensor::from_vec(vec![2], vec![3.0f64, 4.0]).unwrap());
        let mut g = Graph::new();
        let w = g.bind(&p, Bind::Frozen).unwrap();
        let s = g.sum_all(w);
        // Loss must still involve a trainable node for backward to make sense.
        let x = g.leaf(Tensor::scalar(1.0));
        let loss = g.add(s, x).unwrap();
        g.backward(loss).unwrap();
        assert!(g.param_grad("w").is_none());
        assert!(g.grad(x).is_some());
    }

    #[test]
    fn broadcast_add_reduces_gradients_correctly() {
        // a [2, 3] + b [3] → db sums over the leading axis.
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::from_vec(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let b = g.leaf(Tensor::from_vec(vec![3], vec![10., 20., 30.]).unwrap());
        let s = g.add(a, b).unwrap();
        assert_eq!(g.value(s).data()[4], 5. + 20.);
        let sq = g.square(s);
        let loss = g.sum_all(sq);
        g.backward(loss).unwrap();
        let db = g.grad(b).unwrap();
        // d/db_j Σ (a_ij + b_j)² = Σ_i 2(a_ij + b_j)
        let expect = [2.0 * (11.0 + 14.0), 2.0 * (22.0 + 25.0), 2.0 * (33.0 + 36.0)];
        for (got, want) in db.data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn general_broadcast_handles_middle_axes() {
        // [2, 1, 2] · [1, 3, 1] → [2, 3, 2]
        let a = Tensor::from_vec(vec![2, 1, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = Tensor::from_vec(vec![1, 3, 1], vec![10., 100., 1000.]).unwrap();
        let out = broadcast_zip("test", &a, &b, |x, y| x * y).unwrap();
        assert_eq!(out.shape(), &[2, 3, 2]);
        assert_eq!(out.data()[0], 10.0); // a[0,0,0]·b[0,0,0]
        assert_eq!(out.data()[3], 200.0); // a[0,0,1]·b[0,1,0]
        assert_eq!(out.data()[11], 4000.0); // a[1,0,1]·b[0,2,0]
    }

    #[test]
    fn permute_round_trips_and_transposes() {
        let x = Tensor::from_vec(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        let xt = permute_tensor(&x, &[1, 0]).unwrap();
        assert_eq!(xt.shape(), &[3, 2]);
        assert_eq!(xt.data(), &[0., 3., 1., 4., 2., 5.]);
        let back = permute_tensor(&xt, &[1, 0]).unwrap();
        assert_eq!(back.data(), x.data());

        let y = Tensor::from_vec(vec![2, 3, 4], (0..24).map(|v| v as f64).collect()).unwrap();
        let p = permute_tensor(&y, &[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        // p[a, b, c] = y[b, c, a]
        assert_eq!(p.data()[(1 * 2 + 1) * 3 + 2], y.data()[(1 * 3 + 2) * 4 + 1]);
    }

    #[test]
    fn dropout_probability_edge_cases() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::filled(vec![64], 1.0));
        let kept = g.dropout(x, 0.0, &mut rng).unwrap();
        assert!(g.value(kept).data().iter().all(|&v| v == 1.0), "p=0 keeps everything");
        let zeroed = g.dropout(x, 1.0, &mut rng).unwrap();
        assert!(g.value(zeroed).data().iter().all(|&v| v == 0.0), "p=1 zeroes everything");
        assert!(g.value(zeroed).all_finite());
        assert!(g.dropout(x, 1.5, &mut rng).is_err());
    }

    #[test]
    fn fault_injection_scales_gradients() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.square(x);
        g.inject_backward_fault(2.0);
        g.backward(y).unwrap();
        assert!((g.grad(x).unwrap().data()[0] - 12.0).abs() < 1e-12); // honest value is 6
    }
}
