//! Forward definitions and recorded backward rules for every tensor op.

use std::rc::Rc;

use super::{arg_err, numel, shape_err, Tensor, TensorError};
use crate::scalar::Real;

type R<T> = Result<Tensor<T>, TensorError>;

/// `rhs` may equal `lhs` or a trailing suffix of it (leading-batch expansion).
fn suffix_broadcast(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<(), TensorError> {
    if rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs {
        Ok(())
    } else {
        shape_err(op, lhs, rhs)
    }
}

fn reduce_batches<T: Real>(g: &[T], nb: usize) -> Vec<T> {
    let mut out = vec![T::zero(); nb];
    for chunk in g.chunks(nb) {
        out.iter_mut().zip(chunk).for_each(|(o, x)| *o += *x);
    }
    out
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

impl<T: Real> Tensor<T> {
    fn binary(
        &self,
        other: &Tensor<T>,
        op: &'static str,
        f: fn(T, T) -> T,
        dfa: fn(T, T) -> T,
        dfb: fn(T, T) -> T,
    ) -> R<T> {
        suffix_broadcast(op, self.shape(), other.shape())?;
        let a = self.data();
        let b = other.data();
        let nb = b.len().max(1);
        let out: Vec<T> = a.iter().enumerate().map(|(i, &x)| f(x, b[i % nb])).collect();
        drop((a, b));
        let (ta, tb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(op, self.shape().to_vec(), out, vec![self.clone(), other.clone()], move |g| {
            let a = ta.data();
            let b = tb.data();
            let nb = b.len().max(1);
            let ga: Vec<T> = (0..a.len()).map(|i| g[i] * dfa(a[i], b[i % nb])).collect();
            let gb_full: Vec<T> = (0..a.len()).map(|i| g[i] * dfb(a[i], b[i % nb])).collect();
            let gb = if nb == a.len() { gb_full } else { reduce_batches(&gb_full, nb) };
            vec![Some(ga), Some(gb)]
        }))
    }

    pub fn add(&self, other: &Tensor<T>) -> R<T> {
        self.binary(other, "add", |a, b| a + b, |_, _| T::one(), |_, _| T::one())
    }

    pub fn sub(&self, other: &Tensor<T>) -> R<T> {
        self.binary(other, "sub", |a, b| a - b, |_, _| T::one(), |_, _| -T::one())
    }

    pub fn mul(&self, other: &Tensor<T>) -> R<T> {
        self.binary(other, "mul", |a, b| a * b, |_, b| b, |a, _| a)
    }

    fn unary(&self, op: &'static str, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Tensor<T> {
        let out: Vec<T> = self.data().iter().map(|&x| f(x)).collect();
        let src = self.clone();
        let shape = self.shape().to_vec();
        let out_for_bw = out.clone();
        Tensor::from_op(op, shape, out, vec![self.clone()], move |g| {
            let x = src.data();
            vec![Some(
                g.iter()
                    .zip(x.iter().zip(&out_for_bw))
                    .map(|(&g, (&x, &y))| g * df(x, y))
                    .collect(),
            )]
        })
    }

    pub fn add_scalar(&self, s: f64) -> Tensor<T> {
        let s = T::lit(s);
        self.unary("add_scalar", move |x| x + s, |_, _| T::one())
    }

    pub fn mul_scalar(&self, s: f64) -> Tensor<T> {
        let s = T::lit(s);
        self.unary("mul_scalar", move |x| x * s, move |_, _| s)
    }

    pub fn neg(&self) -> Tensor<T> {
        self.mul_scalar(-1.0)
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(
            "relu",
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary("exp", |x| x.exp(), |_, y| y)
    }

    /// Natural log; inputs must be positive.
    pub fn log(&self) -> Tensor<T> {
        self.unary("log", |x| x.ln(), |x, _| T::one() / x)
    }

    /// `max(x, floor)`; no gradient flows where the floor is active.
    pub fn clamp_min(&self, floor: f64) -> Tensor<T> {
        let f = T::lit(floor);
        self.unary(
            "clamp_min",
            move |x| if x > f { x } else { f },
            move |x, _| if x > f { T::one() } else { T::zero() },
        )
    }

    pub fn sum(&self) -> Tensor<T> {
        let s: T = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op("sum", vec![], vec![s], vec![self.clone()], move |g| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel().max(1);
        self.sum().mul_scalar(1.0 / n as f64)
    }

    pub fn reshape(&self, shape: &[usize]) -> R<T> {
        if numel(shape) != self.numel() {
            return shape_err("reshape", self.shape(), shape);
        }
        Ok(Tensor::from_op("reshape", shape.to_vec(), self.to_vec(), vec![self.clone()], |g| {
            vec![Some(g.to_vec())]
        }))
    }

    /// Swaps the last two dimensions.
    pub fn transpose(&self) -> R<T> {
        let s = self.shape();
        if s.len() < 2 {
            return arg_err("transpose", format!("need rank >= 2, got {s:?}"));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let batch = numel(&s[..s.len() - 2]);
        let mut shape = s.to_vec();
        let n = shape.len();
        shape.swap(n - 2, n - 1);
        let tr = move |x: &[T], rows: usize, cols: usize| {
            let mut out = vec![T::zero(); x.len()];
            for b in 0..batch {
                let off = b * rows * cols;
                for i in 0..rows {
                    for j in 0..cols {
                        out[off + j * rows + i] = x[off + i * cols + j];
                    }
                }
            }
            out
        };
        let out = tr(&self.data(), r, c);
        Ok(Tensor::from_op("transpose", shape, out, vec![self.clone()], move |g| {
            vec![Some(tr(g, c, r))]
        }))
    }

    /// Matrix product. Supports `[m,k]x[k,n]`, `[B,m,k]x[B,k,n]` and
    /// `[B,m,k]x[k,n]` (rhs shared across the batch).
    pub fn matmul(&self, other: &Tensor<T>) -> R<T> {
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let bad = || shape_err("matmul", &sa, &sb);
        if sa.len() < 2 || sb.len() < 2 || sb.len() > sa.len() {
            return bad();
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return bad();
        }
        let batch = numel(&sa[..sa.len() - 2]);
        let shared_rhs = sb.len() == 2;
        if !shared_rhs && sb[..sb.len() - 2] != sa[..sa.len() - 2] {
            return bad();
        }
        let mut shape = sa[..sa.len() - 2].to_vec();
        shape.extend([m, n]);
        let mut out = vec![T::zero(); batch * m * n];
        {
            let (a, b) = (self.data(), other.data());
            if shared_rhs {
                T::gemm(false, false, batch * m, k, n, &a, &b, T::zero(), &mut out);
            } else {
                for i in 0..batch {
                    T::gemm(
                        false,
                        false,
                        m,
                        k,
                        n,
                        &a[i * m * k..],
                        &b[i * k * n..],
                        T::zero(),
                        &mut out[i * m * n..],
                    );
                }
            }
        }
        let (ta, tb) = (self.clone(), other.clone());
        Ok(Tensor::from_op("matmul", shape, out, vec![self.clone(), other.clone()], move |g| {
            let (a, b) = (ta.data(), tb.data());
            let mut ga = vec![T::zero(); a.len()];
            let mut gb = vec![T::zero(); b.len()];
            if shared_rhs {
                T::gemm(false, true, batch * m, n, k, g, &b, T::zero(), &mut ga);
                T::gemm(true, false, k, batch * m, n, &a, g, T::zero(), &mut gb);
            } else {
                for i in 0..batch {
                    let gi = &g[i * m * n..];
                    T::gemm(false, true, m, n, k, gi, &b[i * k * n..], T::zero(), &mut ga[i * m * k..]);
                    T::gemm(true, false, k, m, n, &a[i * m * k..], gi, T::zero(), &mut gb[i * k * n..]);
                }
            }
            vec![Some(ga), Some(gb)]
        }))
    }

    /// Softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> R<T> {
        if axis >= self.shape().len() {
            return arg_err("softmax", format!("axis {axis} out of range for {:?}", self.shape()));
        }
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let x = self.data();
        let mut y = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| (o * len + a) * inner + i;
                let mx = (0..len).map(|a| x[idx(a)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for a in 0..len {
                    let e = (x[idx(a)] - mx).exp();
                    y[idx(a)] = e;
                    z += e;
                }
                for a in 0..len {
                    y[idx(a)] /= z;
                }
            }
        }
        drop(x);
        let yb = y.clone();
        Ok(Tensor::from_op("softmax", self.shape().to_vec(), y, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |a: usize| (o * len + a) * inner + i;
                    let dot: T = (0..len).map(|a| g[idx(a)] * yb[idx(a)]).sum();
                    for a in 0..len {
                        gx[idx(a)] = yb[idx(a)] * (g[idx(a)] - dot);
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Normalizes each vector along the last axis to zero mean and unit variance
    /// (no affine part).
    pub fn layer_norm(&self, eps: f64) -> R<T> {
        let c = *self.shape().last().ok_or_else(|| TensorError::Argument {
            op: "layer_norm",
            msg: "rank 0 input".into(),
        })?;
        let eps = T::lit(eps);
        let cf = T::lit(c as f64);
        let x = self.data();
        let mut y = vec![T::zero(); x.len()];
        let mut inv_std = Vec::with_capacity(x.len() / c.max(1));
        for (xr, yr) in x.chunks(c).zip(y.chunks_mut(c)) {
            let mu = xr.iter().copied().sum::<T>() / cf;
            let var = xr.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / cf;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (o, &v) in yr.iter_mut().zip(xr) {
                *o = (v - mu) * is;
            }
        }
        drop(x);
        let yb = y.clone();
        Ok(Tensor::from_op("layer_norm", self.shape().to_vec(), y, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); g.len()];
            for (r, ((gr, yr), gxr)) in g.chunks(c).zip(yb.chunks(c)).zip(gx.chunks_mut(c)).enumerate() {
                let mg = gr.iter().copied().sum::<T>() / cf;
                let mgy = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<T>() / cf;
                for ((o, &gv), &yv) in gxr.iter_mut().zip(gr).zip(yr) {
                    *o = inv_std[r] * (gv - mg - yv * mgy);
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Scales each vector along the last axis to unit L2 norm.
    pub fn normalize_last(&self) -> R<T> {
        let c = *self.shape().last().ok_or_else(|| TensorError::Argument {
            op: "normalize_last",
            msg: "rank 0 input".into(),
        })?;
        let floor = T::lit(1e-12);
        let x = self.data();
        let mut y = vec![T::zero(); x.len()];
        let mut norms = Vec::new();
        for (xr, yr) in x.chunks(c).zip(y.chunks_mut(c)) {
            let n = xr.iter().map(|&v| v * v).sum::<T>().sqrt().max(floor);
            norms.push(n);
            for (o, &v) in yr.iter_mut().zip(xr) {
                *o = v / n;
            }
        }
        drop(x);
        let yb = y.clone();
        Ok(Tensor::from_op("normalize_last", self.shape().to_vec(), y, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); g.len()];
            for (r, ((gr, yr), gxr)) in g.chunks(c).zip(yb.chunks(c)).zip(gx.chunks_mut(c)).enumerate() {
                let d: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                for ((o, &gv), &yv) in gxr.iter_mut().zip(gr).zip(yr) {
                    *o = (gv - yv * d) / norms[r];
                }
            }
            vec![Some(gx)]
        }))
    }

    /// L2 norm along the last axis; the last dimension is removed.
    /// The gradient at a zero vector is taken as zero.
    pub fn norm_last(&self) -> R<T> {
        let s = self.shape().to_vec();
        let Some((&c, lead)) = s.split_last() else {
            return arg_err("norm_last", "rank 0 input");
        };
        let x = self.data();
        let norms: Vec<T> = x.chunks(c).map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt()).collect();
        drop(x);
        let src = self.clone();
        let nb = norms.clone();
        Ok(Tensor::from_op("norm_last", lead.to_vec(), norms, vec![self.clone()], move |g| {
            let x = src.data();
            let mut gx = vec![T::zero(); x.len()];
            for (r, (xr, gxr)) in x.chunks(c).zip(gx.chunks_mut(c)).enumerate() {
                if nb[r] > T::zero() {
                    for (o, &v) in gxr.iter_mut().zip(xr) {
                        *o = g[r] * v / nb[r];
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Selects rows of a 2-D tensor.
    pub fn gather_rows(&self, index: &[usize]) -> R<T> {
        let s = self.shape();
        if s.len() != 2 {
            return arg_err("gather_rows", format!("expected rank 2, got {s:?}"));
        }
        let (n, c) = (s[0], s[1]);
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return arg_err("gather_rows", format!("row {bad} out of range for {n} rows"));
        }
        let x = self.data();
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index {
            out.extend_from_slice(&x[i * c..(i + 1) * c]);
        }
        drop(x);
        let idx = index.to_vec();
        Ok(Tensor::from_op("gather_rows", vec![index.len(), c], out, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); n * c];
            for (r, &i) in idx.iter().enumerate() {
                for j in 0..c {
                    gx[i * c + j] += g[r * c + j];
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Selects elements by flat index; output shape `[index.len()]`.
    pub fn gather_flat(&self, index: &[usize]) -> R<T> {
        let n = self.numel();
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return arg_err("gather_flat", format!("index {bad} out of range for {n} elements"));
        }
        let x = self.data();
        let out = index.iter().map(|&i| x[i]).collect();
        drop(x);
        let idx = index.to_vec();
        Ok(Tensor::from_op("gather_flat", vec![index.len()], out, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); n];
            for (r, &i) in idx.iter().enumerate() {
                gx[i] += g[r];
            }
            vec![Some(gx)]
        }))
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> R<T> {
        let s = self.shape().to_vec();
        if axis >= s.len() || start + len > s[axis] {
            return arg_err("narrow", format!("range {start}+{len} on axis {axis} of {s:?}"));
        }
        let (outer, full, inner) = axis_split(&s, axis);
        let x = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&x[base..base + len * inner]);
        }
        drop(x);
        let mut shape = s.clone();
        shape[axis] = len;
        let total = numel(&s);
        Ok(Tensor::from_op("narrow", shape, out, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); total];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Tensor<T>], axis: usize) -> R<T> {
        let Some(first) = parts.first() else {
            return arg_err("concat", "no inputs");
        };
        let s0 = first.shape().to_vec();
        if axis >= s0.len() {
            return arg_err("concat", format!("axis {axis} out of range for {s0:?}"));
        }
        for p in parts {
            let s = p.shape();
            if s.len() != s0.len() || s.iter().zip(&s0).enumerate().any(|(d, (a, b))| d != axis && a != b) {
                return shape_err("concat", &s0, s);
            }
        }
        let outer = numel(&s0[..axis]);
        let inner = numel(&s0[axis + 1..]);
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total_len: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(outer * total_len * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                let d = p.data();
                out.extend_from_slice(&d[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut shape = s0.clone();
        shape[axis] = total_len;
        Ok(Tensor::from_op("concat", shape, out, parts.to_vec(), move |g| {
            let mut grads: Vec<Vec<T>> = lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gp, &l) in grads.iter_mut().zip(&lens) {
                    gp.extend_from_slice(&g[off..off + l * inner]);
                    off += l * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }

    /// Sparse row mixing: `out[o] += w * self[i]` for each `(o, i, w)` entry.
    /// Used for voxel pooling and kernel-point aggregation.
    pub fn sparse_rows(&self, entries: Rc<Vec<(u32, u32, T)>>, n_out: usize) -> R<T> {
        let s = self.shape();
        if s.len() != 2 {
            return arg_err("sparse_rows", format!("expected rank 2, got {s:?}"));
        }
        let (n, c) = (s[0], s[1]);
        if entries.iter().any(|&(o, i, _)| o as usize >= n_out || i as usize >= n) {
            return arg_err("sparse_rows", "entry index out of range");
        }
        let x = self.data();
        let mut out = vec![T::zero(); n_out * c];
        for &(o, i, w) in entries.iter() {
            let (o, i) = (o as usize, i as usize);
            let dst = &mut out[o * c..(o + 1) * c];
            for (d, &v) in dst.iter_mut().zip(&x[i * c..(i + 1) * c]) {
                *d += w * v;
            }
        }
        drop(x);
        Ok(Tensor::from_op("sparse_rows", vec![n_out, c], out, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); n * c];
            for &(o, i, w) in entries.iter() {
                let (o, i) = (o as usize, i as usize);
                for j in 0..c {
                    gx[i * c + j] += w * g[o * c + j];
                }
            }
            vec![Some(gx)]
        }))
    }

    /// 2-D convolution of a `[C,H,W]` input with `[O,C,kh,kw]` weights and an
    /// optional `[O]` bias, zero padding on all sides.
    pub fn conv2d(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>, stride: usize, padding: usize) -> R<T> {
        let (si, sw) = (self.shape().to_vec(), weight.shape().to_vec());
        if si.len() != 3 || sw.len() != 4 || si[0] != sw[1] || stride == 0 {
            return shape_err("conv2d", &si, &sw);
        }
        let (c, h, w) = (si[0], si[1], si[2]);
        let (o, kh, kw) = (sw[0], sw[2], sw[3]);
        if let Some(b) = bias {
            if b.shape() != [o] {
                return shape_err("conv2d", &sw, b.shape());
            }
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return shape_err("conv2d", &si, &sw);
        }
        let ho = (h + 2 * padding - kh) / stride + 1;
        let wo = (w + 2 * padding - kw) / stride + 1;
        let geo = ConvGeom { c, h, w, kh, kw, stride, padding, ho, wo };
        let cols = geo.im2col(&self.data());
        let ck = c * kh * kw;
        let mut out = vec![T::zero(); o * ho * wo];
        T::gemm(false, false, o, ck, ho * wo, &weight.data(), &cols, T::zero(), &mut out);
        if let Some(b) = bias {
            let b = b.data();
            for (oc, row) in out.chunks_mut(ho * wo).enumerate() {
                row.iter_mut().for_each(|v| *v += b[oc]);
            }
        }
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let wt = weight.clone();
        let has_bias = bias.is_some();
        Ok(Tensor::from_op("conv2d", vec![o, ho, wo], out, parents, move |g| {
            let mut gw = vec![T::zero(); o * ck];
            T::gemm(false, true, o, ho * wo, ck, g, &cols, T::zero(), &mut gw);
            let mut gcols = vec![T::zero(); ck * ho * wo];
            T::gemm(true, false, ck, o, ho * wo, &wt.data(), g, T::zero(), &mut gcols);
            let gx = geo.col2im(&gcols);
            let mut grads = vec![Some(gx), Some(gw)];
            if has_bias {
                grads.push(Some(g.chunks(ho * wo).map(|r| r.iter().copied().sum()).collect()));
            }
            grads
        }))
    }

    /// Max pooling over `[C,H,W]` with square window `k` and stride `stride` (no padding).
    pub fn max_pool2d(&self, k: usize, stride: usize) -> R<T> {
        let s = self.shape().to_vec();
        if s.len() != 3 || k == 0 || stride == 0 || s[1] < k || s[2] < k {
            return arg_err("max_pool2d", format!("window {k} stride {stride} on {s:?}"));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let ho = (h - k) / stride + 1;
        let wo = (w - k) / stride + 1;
        let x = self.data();
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut arg = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = T::neg_infinity();
                    let mut bi = 0;
                    for dy in 0..k {
                        for dx in 0..k {
                            let i = (ch * h + oy * stride + dy) * w + ox * stride + dx;
                            if x[i] > best {
                                best = x[i];
                                bi = i;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(bi);
                }
            }
        }
        drop(x);
        let n = c * h * w;
        Ok(Tensor::from_op("max_pool2d", vec![c, ho, wo], out, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); n];
            for (gv, &i) in g.iter().zip(&arg) {
                gx[i] += *gv;
            }
            vec![Some(gx)]
        }))
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    /// Visits (column-matrix index, input index) pairs for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let npix = self.ho * self.wo;
        for ch in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ch * self.kh + ky) * self.kw + kx;
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            f(row * npix + oy * self.wo + ox, (ch * self.h + iy as usize) * self.w + ix as usize);
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Real>(&self, x: &[T]) -> Vec<T> {
        let mut cols = vec![T::zero(); self.c * self.kh * self.kw * self.ho * self.wo];
        self.for_each_tap(|ci, xi| cols[ci] = x[xi]);
        cols
    }

    fn col2im<T: Real>(&self, cols: &[T]) -> Vec<T> {
        let mut x = vec![T::zero(); self.c * self.h * self.w];
        self.for_each_tap(|ci, xi| x[xi] += cols[ci]);
        x
    }
}
