//! Dense kernels behind the neural-network ops: matrix products, 2-D
//! convolution via im2col, batch normalization, and average pooling.
//!
//! Every kernel is bit-deterministic under threading: rayon only splits work
//! across independent output elements, and each element accumulates its sum
//! in a fixed sequential order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Below this many multiply-adds, threading costs more than it saves.
const PAR_THRESHOLD: usize = 1 << 17;

/// `a [m, k] · b [k, n] → [m, n]`.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    fn row<T: Scalar>(a: &[T], b: &[T], k: usize, n: usize, i: usize, out: &mut [T]) {
        for kk in 0..k {
            let av = a[i * k + kk];
            for (o, &bv) in out.iter_mut().zip(&b[kk * n..(kk + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    let mut out = vec![T::zero(); m * n];
    if m > 1 && m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(|(i, orow)| row(a, b, k, n, i, orow));
    } else {
        for (i, orow) in out.chunks_mut(n).enumerate() {
            row(a, b, k, n, i, orow);
        }
    }
    out
}

/// `a [m, k] · bᵀ, b [n, k] → [m, n]` (rows of `a` dotted with rows of `b`).
pub fn matmul_abt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    fn row<T: Scalar>(a: &[T], b: &[T], k: usize, _n: usize, i: usize, out: &mut [T]) {
        let arow = &a[i * k..(i + 1) * k];
        for (j, o) in out.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (x, y) in arow.iter().zip(brow) {
                acc += *x * *y;
            }
            *o = acc;
        }
    }
    let mut out = vec![T::zero(); m * n];
    if m > 1 && m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(|(i, orow)| row(a, b, k, n, i, orow));
    } else {
        for (i, orow) in out.chunks_mut(n).enumerate() {
            row(a, b, k, n, i, orow);
        }
    }
    out
}

/// `aᵀ · b, a [k, m], b [k, n] → [m, n]`.
pub fn matmul_atb<T: Scalar>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    fn row<T: Scalar>(a: &[T], b: &[T], k: usize, m: usize, n: usize, i: usize, out: &mut [T]) {
        for kk in 0..k {
            let av = a[kk * m + i];
            for (o, &bv) in out.iter_mut().zip(&b[kk * n..(kk + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    let mut out = vec![T::zero(); m * n];
    if m > 1 && m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(|(i, orow)| row(a, b, k, m, n, i, orow));
    } else {
        for (i, orow) in out.chunks_mut(n).enumerate() {
            row(a, b, k, m, n, i, orow);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Linear

/// `x [..., in] · wᵀ + b`, `w [out, in]`, `b [out]` → `[..., out]`.
pub fn linear_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    if x.ndim() < 1 || w.ndim() != 2 {
        return Err(Error::shape(format!(
            "linear expects x [..., in] and w [out, in], got {:?} and {:?}",
            x.shape(),
            w.shape()
        )));
    }
    let in_dim = *x.shape().last().unwrap();
    let (out_dim, w_in) = (w.shape()[0], w.shape()[1]);
    if w_in != in_dim {
        return Err(Error::shape(format!(
            "linear input dim {in_dim} does not match weight [out={out_dim}, in={w_in}]"
        )));
    }
    if let Some(bias) = b {
        if bias.shape() != [out_dim] {
            return Err(Error::shape(format!(
                "linear bias shape {:?} does not match out dim {out_dim}",
                bias.shape()
            )));
        }
    }
    let rows = x.len() / in_dim;
    let mut data = matmul_abt(x.data(), w.data(), rows, in_dim, out_dim);
    if let Some(bias) = b {
        for r in 0..rows {
            for (o, &bv) in data[r * out_dim..(r + 1) * out_dim].iter_mut().zip(bias.data()) {
                *o += bv;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = out_dim;
    Tensor::from_vec(shape, data)
}

/// Gradients of `linear_forward`: `(dx, dw, db)`.
pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    g: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let in_dim = *x.shape().last().unwrap();
    let out_dim = w.shape()[0];
    let rows = x.len() / in_dim;
    // dx[r, i] = Σ_o g[r, o]·w[o, i]
    let dx = matmul(g.data(), w.data(), rows, out_dim, in_dim);
    // dw[o, i] = Σ_r g[r, o]·x[r, i]
    let dw = matmul_atb(g.data(), x.data(), rows, out_dim, in_dim);
    let mut db = vec![T::zero(); out_dim];
    for r in 0..rows {
        for (d, &gv) in db.iter_mut().zip(&g.data()[r * out_dim..(r + 1) * out_dim]) {
            *d += gv;
        }
    }
    (
        Tensor::from_vec(x.shape().to_vec(), dx).expect("dx shape"),
        Tensor::from_vec(vec![out_dim, in_dim], dw).expect("dw shape"),
        Tensor::from_vec(vec![out_dim], db).expect("db shape"),
    )
}

// ---------------------------------------------------------------------------
// Conv2d

#[derive(Debug, Clone, Copy)]
pub struct Conv2dGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub out_h: usize,
    pub out_w: usize,
}

impl Conv2dGeometry {
    pub fn resolve<T: Scalar>(
        x: &Tensor<T>,
        w: &Tensor<T>,
        b: Option<&Tensor<T>>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        if x.ndim() != 4 || w.ndim() != 4 {
            return Err(Error::shape(format!(
                "conv2d expects x [b, c, h, w] and w [o, c, kh, kw], got {:?} and {:?}",
                x.shape(),
                w.shape()
            )));
        }
        let (batch, c_in, h, ww) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (c_out, wc, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        if wc != c_in {
            return Err(Error::shape(format!(
                "conv2d input has {c_in} channels but weight expects {wc}"
            )));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        if let Some(bias) = b {
            if bias.shape() != [c_out] {
                return Err(Error::shape(format!(
                    "conv2d bias shape {:?} does not match {c_out} output channels",
                    bias.shape()
                )));
            }
        }
        let h_eff = h + 2 * padding.0;
        let w_eff = ww + 2 * padding.1;
        if h_eff < kh || w_eff < kw {
            return Err(Error::shape(format!(
                "conv2d kernel {kh}×{kw} larger than padded input {h_eff}×{w_eff}"
            )));
        }
        Ok(Conv2dGeometry {
            batch,
            c_in,
            h,
            w: ww,
            c_out,
            kh,
            kw,
            stride,
            padding,
            out_h: (h_eff - kh) / stride.0 + 1,
            out_w: (w_eff - kw) / stride.1 + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfold one image `[c, h, w]` into `[c·kh·kw, out_h·out_w]`.
fn im2col<T: Scalar>(x: &[T], geo: &Conv2dGeometry) -> Vec<T> {
    let mut col = vec![T::zero(); geo.col_rows() * geo.col_cols()];
    let (sh, sw) = geo.stride;
    let (ph, pw) = geo.padding;
    let mut row = 0usize;
    for c in 0..geo.c_in {
        for ki in 0..geo.kh {
            for kj in 0..geo.kw {
                let dst = &mut col[row * geo.col_cols()..(row + 1) * geo.col_cols()];
                for oy in 0..geo.out_h {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= geo.h as isize {
                        continue;
                    }
                    let src_base = (c * geo.h + iy as usize) * geo.w;
                    for ox in 0..geo.out_w {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if 0 <= ix && ix < geo.w as isize {
                            dst[oy * geo.out_w + ox] = x[src_base + ix as usize];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    col
}

/// Fold `[c·kh·kw, out_h·out_w]` gradients back onto one image `[c, h, w]`.
fn col2im_accumulate<T: Scalar>(col: &[T], geo: &Conv2dGeometry, out: &mut [T]) {
    let (sh, sw) = geo.stride;
    let (ph, pw) = geo.padding;
    let mut row = 0usize;
    for c in 0..geo.c_in {
        for ki in 0..geo.kh {
            for kj in 0..geo.kw {
                let src = &col[row * geo.col_cols()..(row + 1) * geo.col_cols()];
                for oy in 0..geo.out_h {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= geo.h as isize {
                        continue;
                    }
                    let dst_base = (c * geo.h + iy as usize) * geo.w;
                    for ox in 0..geo.out_w {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if 0 <= ix && ix < geo.w as isize {
                            out[dst_base + ix as usize] += src[oy * geo.out_w + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Unfold output row `oy` of one image into `col [c_in·kh·kw, out_w]` —
/// the same layout as one horizontal strip of [`im2col`].
fn im2col_row<T: Scalar>(x: &[T], geo: &Conv2dGeometry, oy: usize, col: &mut [T]) {
    let (sh, sw) = geo.stride;
    let (ph, pw) = geo.padding;
    let out_w = geo.out_w;
    let mut row = 0usize;
    for c in 0..geo.c_in {
        for ki in 0..geo.kh {
            let iy = (oy * sh + ki) as isize - ph as isize;
            if iy < 0 || iy >= geo.h as isize {
                col[row * out_w..(row + geo.kw) * out_w].fill(T::zero());
                row += geo.kw;
                continue;
            }
            let src = &x[(c * geo.h + iy as usize) * geo.w..(c * geo.h + iy as usize + 1) * geo.w];
            for kj in 0..geo.kw {
                let dst = &mut col[row * out_w..(row + 1) * out_w];
                row += 1;
                // ox is valid iff 0 ≤ ox·sw + kj − pw < w.
                let first = if kj >= pw { 0 } else { (pw - kj).div_ceil(sw) }.min(out_w);
                let last = if geo.w + pw > kj {
                    ((geo.w + pw - kj - 1) / sw + 1).min(out_w)
                } else {
                    0
                }
                .max(first);
                dst[..first].fill(T::zero());
                dst[last..].fill(T::zero());
                if sw == 1 {
                    let start = first + kj - pw;
                    dst[first..last].copy_from_slice(&src[start..start + (last - first)]);
                } else {
                    for (ox, d) in dst[first..last].iter_mut().enumerate() {
                        *d = src[(first + ox) * sw + kj - pw];
                    }
                }
            }
        }
    }
}

/// 2-D convolution (cross-correlation) with zero padding.
///
/// Work splits across (image, output row) pairs, each a narrow im2col strip
/// plus a small matrix product, so parallelism scales with `out_h` even for a
/// single image. Per-element accumulation order matches a plain im2col
/// matmul, keeping results bit-identical regardless of threading.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    geo: &Conv2dGeometry,
) -> Tensor<T> {
    let plane = geo.c_in * geo.h * geo.w;
    let (m, k, n) = (geo.c_out, geo.col_rows(), geo.out_w);
    let rows = geo.batch * geo.out_h;

    // Staging layout [b, oy, c_out, out_w]: row-contiguous so each task owns
    // one chunk. For m == 1 this already is the output layout.
    let mut staged = vec![T::zero(); rows * m * n];
    let run_row = |col: &mut Vec<T>, idx: usize, dst: &mut [T]| {
        let (b_idx, oy) = (idx / geo.out_h, idx % geo.out_h);
        im2col_row(&x.data()[b_idx * plane..(b_idx + 1) * plane], geo, oy, col);
        for c in 0..m {
            let wrow = &w.data()[c * k..(c + 1) * k];
            let orow = &mut dst[c * n..(c + 1) * n];
            for (kk, &wv) in wrow.iter().enumerate() {
                for (o, &cv) in orow.iter_mut().zip(&col[kk * n..(kk + 1) * n]) {
                    *o += wv * cv;
                }
            }
        }
    };
    if rows > 1 && rows * m * k * n >= PAR_THRESHOLD {
        staged
            .par_chunks_mut(m * n)
            .enumerate()
            .for_each_init(|| vec![T::zero(); k * n], |col, (idx, dst)| run_row(col, idx, dst));
    } else {
        let mut col = vec![T::zero(); k * n];
        for (idx, dst) in staged.chunks_mut(m * n).enumerate() {
            run_row(&mut col, idx, dst);
        }
    }

    let shape = vec![geo.batch, geo.c_out, geo.out_h, geo.out_w];
    if m == 1 {
        if let Some(bias) = b {
            let bv = bias.data()[0];
            for v in &mut staged {
                *v += bv;
            }
        }
        return Tensor::from_vec(shape, staged).expect("conv2d shape");
    }

    // Transpose each image to [c_out, out_h, out_w], folding in the bias.
    let out_plane = m * geo.out_h * n;
    let mut out = vec![T::zero(); rows * m * n];
    for b_idx in 0..geo.batch {
        let src_b = &staged[b_idx * out_plane..(b_idx + 1) * out_plane];
        let dst_b = &mut out[b_idx * out_plane..(b_idx + 1) * out_plane];
        for c in 0..m {
            let bias_v = b.map(|t| t.data()[c]).unwrap_or_else(T::zero);
            for oy in 0..geo.out_h {
                let src = &src_b[(oy * m + c) * n..(oy * m + c) * n + n];
                let dst = &mut dst_b[(c * geo.out_h + oy) * n..(c * geo.out_h + oy) * n + n];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + bias_v;
                }
            }
        }
    }
    Tensor::from_vec(shape, out).expect("conv2d shape")
}

/// Gradients of `conv2d_forward`: `(dx, dw, db)`. The im2col buffers are
/// recomputed here rather than kept alive from the forward pass.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    g: &Tensor<T>,
    geo: &Conv2dGeometry,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let plane = geo.c_in * geo.h * geo.w;
    let out_plane = geo.c_out * geo.col_cols();

    // dx: scatter wᵀ·g_b back through im2col, batches independent.
    let mut dx = vec![T::zero(); x.len()];
    let run = |b_idx: usize, dst: &mut [T]| {
        let gb = &g.data()[b_idx * out_plane..(b_idx + 1) * out_plane];
        let dcol = matmul_atb(w.data(), gb, geo.c_out, geo.col_rows(), geo.col_cols());
        col2im_accumulate(&dcol, geo, dst);
    };
    if geo.batch > 1 && geo.batch * out_plane * geo.col_rows() >= PAR_THRESHOLD {
        dx.par_chunks_mut(plane).enumerate().for_each(|(b_idx, dst)| run(b_idx, dst));
    } else {
        for (b_idx, dst) in dx.chunks_mut(plane).enumerate() {
            run(b_idx, dst);
        }
    }

    // dw: accumulate g_b·col_bᵀ over batches in fixed order.
    let mut dw = vec![T::zero(); w.len()];
    for b_idx in 0..geo.batch {
        let col = im2col(&x.data()[b_idx * plane..(b_idx + 1) * plane], geo);
        let gb = &g.data()[b_idx * out_plane..(b_idx + 1) * out_plane];
        let contrib = matmul_abt(gb, &col, geo.c_out, geo.col_cols(), geo.col_rows());
        for (d, v) in dw.iter_mut().zip(contrib) {
            *d += v;
        }
    }

    let mut db = vec![T::zero(); geo.c_out];
    for b_idx in 0..geo.batch {
        let gb = &g.data()[b_idx * out_plane..(b_idx + 1) * out_plane];
        for (c, d) in db.iter_mut().enumerate() {
            for &gv in &gb[c * geo.col_cols()..(c + 1) * geo.col_cols()] {
                *d += gv;
            }
        }
    }

    (
        Tensor::from_vec(x.shape().to_vec(), dx).expect("dx shape"),
        Tensor::from_vec(w.shape().to_vec(), dw).expect("dw shape"),
        Tensor::from_vec(vec![geo.c_out], db).expect("db shape"),
    )
}

// ---------------------------------------------------------------------------
// Batch normalization over [b, c, h, w]

#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (1/m) variance used for normalization.
    pub var_biased: Vec<T>,
    /// Unbiased (1/(m−1)) variance for running-average updates.
    pub var_unbiased: Vec<T>,
    pub invstd: Vec<T>,
}

fn bn_dims<T: Scalar>(x: &Tensor<T>, channels: usize) -> Result<(usize, usize)> {
    if x.ndim() != 4 || x.shape()[1] != channels {
        return Err(Error::shape(format!(
            "batchnorm expects [b, {channels}, h, w], got {:?}",
            x.shape()
        )));
    }
    let per_channel = x.shape()[0] * x.shape()[2] * x.shape()[3];
    if per_channel < 2 {
        return Err(Error::invalid(
            "batchnorm needs ≥ 2 values per channel to estimate variance",
        ));
    }
    Ok((x.shape()[1], per_channel))
}

/// Channel iterator helper: calls `f(channel, flat_index)` over all positions.
fn for_each_channel<T: Scalar>(x: &Tensor<T>, mut f: impl FnMut(usize, usize)) {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let plane = h * w;
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            for p in 0..plane {
                f(ci, base + p);
            }
        }
    }
}

pub fn batchnorm_train_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<(Tensor<T>, BatchStats<T>)> {
    let (c, m) = bn_dims(x, gamma.len())?;
    let m_t = T::of_usize(m);
    let xd = x.data();

    let mut mean = vec![T::zero(); c];
    for_each_channel(x, |ci, i| mean[ci] += xd[i]);
    for v in &mut mean {
        *v /= m_t;
    }
    let mut var = vec![T::zero(); c];
    for_each_channel(x, |ci, i| {
        let d = xd[i] - mean[ci];
        var[ci] += d * d;
    });
    for v in &mut var {
        *v /= m_t;
    }
    let invstd: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let var_unbiased: Vec<T> =
        var.iter().map(|&v| v * m_t / T::of_usize(m - 1)).collect();

    let mut out = vec![T::zero(); x.len()];
    for_each_channel(x, |ci, i| {
        out[i] = gamma[ci] * (xd[i] - mean[ci]) * invstd[ci] + beta[ci];
    });
    Ok((
        Tensor::from_vec(x.shape().to_vec(), out).expect("bn shape"),
        BatchStats { mean, var_biased: var, var_unbiased, invstd },
    ))
}

/// Gradients of `batchnorm_train_forward`: `(dx, dgamma, dbeta)`.
pub fn batchnorm_train_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    stats: &BatchStats<T>,
    g: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let c = gamma.len();
    let m = x.len() / c;
    let m_t = T::of_usize(m);
    let (xd, gd) = (x.data(), g.data());

    let mut sum_g = vec![T::zero(); c];
    let mut sum_gxh = vec![T::zero(); c];
    for_each_channel(x, |ci, i| {
        sum_g[ci] += gd[i];
        sum_gxh[ci] += gd[i] * (xd[i] - stats.mean[ci]) * stats.invstd[ci];
    });

    let mut dx = vec![T::zero(); x.len()];
    for_each_channel(x, |ci, i| {
        let xh = (xd[i] - stats.mean[ci]) * stats.invstd[ci];
        dx[i] = gamma[ci] * stats.invstd[ci] / m_t
            * (m_t * gd[i] - sum_g[ci] - xh * sum_gxh[ci]);
    });

    (
        Tensor::from_vec(x.shape().to_vec(), dx).expect("bn dx shape"),
        Tensor::from_vec(vec![c], sum_gxh).expect("bn dgamma shape"),
        Tensor::from_vec(vec![c], sum_g).expect("bn dbeta shape"),
    )
}

/// Inference-mode normalization with fixed running statistics.
pub fn batchnorm_eval_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    eps: T,
) -> Result<(Tensor<T>, Vec<T>)> {
    let (c, _) = bn_dims(x, gamma.len())?;
    if running_mean.len() != c || running_var.len() != c {
        return Err(Error::shape("running statistics do not match channel count"));
    }
    let invstd: Vec<T> = running_var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let xd = x.data();
    let mut out = vec![T::zero(); x.len()];
    for_each_channel(x, |ci, i| {
        out[i] = gamma[ci] * (xd[i] - running_mean[ci]) * invstd[ci] + beta[ci];
    });
    Ok((Tensor::from_vec(x.shape().to_vec(), out).expect("bn shape"), invstd))
}

/// Gradients of `batchnorm_eval_forward` (statistics are constants here).
pub fn batchnorm_eval_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    running_mean: &[T],
    invstd: &[T],
    g: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let c = gamma.len();
    let (xd, gd) = (x.data(), g.data());
    let mut dx = vec![T::zero(); x.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for_each_channel(x, |ci, i| {
        dx[i] = gd[i] * gamma[ci] * invstd[ci];
        dgamma[ci] += gd[i] * (xd[i] - running_mean[ci]) * invstd[ci];
        dbeta[ci] += gd[i];
    });
    (
        Tensor::from_vec(x.shape().to_vec(), dx).expect("bn dx shape"),
        Tensor::from_vec(vec![c], dgamma).expect("bn dgamma shape"),
        Tensor::from_vec(vec![c], dbeta).expect("bn dbeta shape"),
    )
}

// ---------------------------------------------------------------------------
// 1-D average pooling over [b, c, w]

pub fn avg_pool1d_out_len(w: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::invalid("pool kernel and stride must be positive"));
    }
    let eff = w + 2 * padding;
    if eff < kernel {
        return Err(Error::shape(format!("pool kernel {kernel} larger than padded width {eff}")));
    }
    Ok((eff - kernel) / stride + 1)
}

/// Mean over each window, zeros beyond the edges counted in the mean.
pub fn avg_pool1d_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    if x.ndim() != 3 {
        return Err(Error::shape(format!("avg_pool1d expects [b, c, w], got {:?}", x.shape())));
    }
    let (b, c, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let out_w = avg_pool1d_out_len(w, kernel, stride, padding)?;
    let inv_k = T::one() / T::of_usize(kernel);
    let xd = x.data();
    let mut out = vec![T::zero(); b * c * out_w];
    for row in 0..b * c {
        let src = &xd[row * w..(row + 1) * w];
        let dst = &mut out[row * out_w..(row + 1) * out_w];
        for (ow, o) in dst.iter_mut().enumerate() {
            let mut acc = T::zero();
            for j in 0..kernel {
                let i = (ow * stride + j) as isize - padding as isize;
                if 0 <= i && (i as usize) < w {
                    acc += src[i as usize];
                }
            }
            *o = acc * inv_k;
        }
    }
    Tensor::from_vec(vec![b, c, out_w], out)
}

pub fn avg_pool1d_backward<T: Scalar>(
    x_shape: &[usize],
    g: &Tensor<T>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Tensor<T> {
    let (b, c, w) = (x_shape[0], x_shape[1], x_shape[2]);
    let out_w = g.shape()[2];
    let inv_k = T::one() / T::of_usize(kernel);
    let gd = g.data();
    let mut dx = vec![T::zero(); b * c * w];
    for row in 0..b * c {
        let src = &gd[row * out_w..(row + 1) * out_w];
        let dst = &mut dx[row * w..(row + 1) * w];
        for (ow, &gv) in src.iter().enumerate() {
            for j in 0..kernel {
                let i = (ow * stride + j) as isize - padding as isize;
                if 0 <= i && (i as usize) < w {
                    dst[i as usize] += gv * inv_k;
                }
            }
        }
    }
    Tensor::from_vec(x_shape.to_vec(), dx).expect("pool dx shape")
}
