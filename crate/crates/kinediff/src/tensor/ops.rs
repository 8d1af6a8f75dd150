//! Tensor operations and their reverse-mode rules.

use super::{numel, strides_for, Node, Tensor};
use rayon::prelude::*;

/// Work threshold below which matmul stays single-threaded.
const PAR_FLOP_THRESHOLD: usize = 1 << 16;

fn broadcast_shapes(a: &[usize], b: &[usize], op: &str) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let ad = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let bd = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (ad, bd) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => panic!("{op}: shapes {a:?} and {b:?} are not broadcastable"),
        };
    }
    out
}

/// Padded broadcast strides of `shape` against an `rank`-dim output.
fn bcast_strides(shape: &[usize], rank: usize) -> Vec<usize> {
    let mut st = vec![0usize; rank];
    let ss = strides_for(shape);
    let off = rank - shape.len();
    for i in 0..shape.len() {
        st[off + i] = if shape[i] == 1 { 0 } else { ss[i] };
    }
    st
}

/// Visit every output element of a broadcast pair, yielding flat indices
/// into (out, a, b).
fn for_each_bcast(out_shape: &[usize], a_shape: &[usize], b_shape: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let rank = out_shape.len();
    let n = numel(out_shape);
    if n == 0 {
        return;
    }
    let sa = bcast_strides(a_shape, rank);
    let sb = bcast_strides(b_shape, rank);
    let mut idx = vec![0usize; rank];
    let (mut fa, mut fb) = (0usize, 0usize);
    for out_flat in 0..n {
        f(out_flat, fa, fb);
        for d in (0..rank).rev() {
            idx[d] += 1;
            fa += sa[d];
            fb += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            fa -= sa[d] * out_shape[d];
            fb -= sb[d] * out_shape[d];
        }
    }
}

fn binary(a: &Tensor, b: &Tensor, op: &'static str, f: fn(f64, f64) -> f64, dfa: fn(f64, f64) -> f64, dfb: fn(f64, f64) -> f64) -> Tensor {
    let out_shape = broadcast_shapes(a.shape(), b.shape(), op);
    let mut out = vec![0.0; numel(&out_shape)];
    {
        let ad = a.data();
        let bd = b.data();
        if a.shape() == b.shape() {
            for ((o, &x), &y) in out.iter_mut().zip(ad.iter()).zip(bd.iter()) {
                *o = f(x, y);
            }
        } else {
            for_each_bcast(&out_shape, a.shape(), b.shape(), |o, ia, ib| out[o] = f(ad[ia], bd[ib]));
        }
    }
    let rg = a.requires_grad() || b.requires_grad();
    let node = rg.then(|| {
        let (ac, bc) = (a.clone(), b.clone());
        let osh = out_shape.clone();
        Node {
            parents: vec![ac.clone(), bc.clone()],
            backward: Box::new(move |g: &[f64]| {
                let ad = ac.data();
                let bd = bc.data();
                let need_a = ac.requires_grad();
                let need_b = bc.requires_grad();
                let mut ga = vec![0.0; if need_a { ad.len() } else { 0 }];
                let mut gb = vec![0.0; if need_b { bd.len() } else { 0 }];
                for_each_bcast(&osh, ac.shape(), bc.shape(), |o, ia, ib| {
                    let (x, y) = (ad[ia], bd[ib]);
                    if need_a {
                        ga[ia] += g[o] * dfa(x, y);
                    }
                    if need_b {
                        gb[ib] += g[o] * dfb(x, y);
                    }
                });
                drop(ad);
                drop(bd);
                if need_a {
                    ac.accumulate_grad(&ga);
                }
                if need_b {
                    bc.accumulate_grad(&gb);
                }
            }),
        }
    });
    Tensor::make(out_shape, out, rg, node)
}

fn unary(a: &Tensor, f: fn(f64) -> f64, df: fn(f64, f64) -> f64) -> Tensor {
    let out: Vec<f64> = a.data().iter().map(|&x| f(x)).collect();
    let rg = a.requires_grad();
    let node = rg.then(|| {
        let ac = a.clone();
        let fc = f;
        Node {
            parents: vec![ac.clone()],
            backward: Box::new(move |g: &[f64]| {
                let ad = ac.data();
                let ga: Vec<f64> = ad.iter().zip(g).map(|(&x, &go)| go * df(x, fc(x))).collect();
                drop(ad);
                ac.accumulate_grad(&ga);
            }),
        }
    });
    Tensor::make(a.shape().to_vec(), out, rg, node)
}

/// Raw batched matmul: `a` is [batch, m, k]; `b` is [batch, k, p] when
/// `b_batched`, else a shared [k, p].
fn mm_raw(a: &[f64], b: &[f64], batch: usize, m: usize, k: usize, p: usize, b_batched: bool) -> Vec<f64> {
    let mut c = vec![0.0; batch * m * p];
    let b_bs = if b_batched { k * p } else { 0 };
    let body = |(row, crow): (usize, &mut [f64])| {
        let bi = row / m;
        let i = row % m;
        let a_off = bi * m * k + i * k;
        let b_off = bi * b_bs;
        for kk in 0..k {
            let av = a[a_off + kk];
            let brow = &b[b_off + kk * p..b_off + kk * p + p];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    };
    if batch * m * k * p >= PAR_FLOP_THRESHOLD {
        c.par_chunks_mut(p).enumerate().for_each(body);
    } else {
        c.chunks_mut(p).enumerate().for_each(body);
    }
    c
}

/// Transpose the last two axes of a [batch, r, c] buffer.
fn transpose_last2(data: &[f64], batch: usize, r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for bi in 0..batch {
        let base = bi * r * c;
        for i in 0..r {
            for j in 0..c {
                out[base + j * r + i] = data[base + i * c + j];
            }
        }
    }
    out
}

fn permute_raw(data: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let out_shape: Vec<usize> = perm.iter().map(|&i| shape[i]).collect();
    let in_str = strides_for(shape);
    let mapped: Vec<usize> = perm.iter().map(|&i| in_str[i]).collect();
    let n = numel(&out_shape);
    let mut out = vec![0.0; n];
    let mut idx = vec![0usize; shape.len()];
    let mut fin = 0usize;
    for slot in out.iter_mut() {
        *slot = data[fin];
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            fin += mapped[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            fin -= mapped[d] * out_shape[d];
        }
    }
    (out_shape, out)
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Tensor {
        binary(self, other, "add", |x, y| x + y, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        binary(self, other, "sub", |x, y| x - y, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        binary(self, other, "mul", |x, y| x * y, |_, y| y, |x, _| x)
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        binary(self, other, "div", |x, y| x / y, |_, y| 1.0 / y, |x, y| -x / (y * y))
    }

    pub fn neg(&self) -> Tensor {
        unary(self, |x| -x, |_, _| -1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let cc = Tensor::scalar(c);
        self.add(&cc)
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        let cc = Tensor::scalar(c);
        self.mul(&cc)
    }

    /// Gaussian error linear unit, tanh form.
    pub fn gelu(&self) -> Tensor {
        const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
        const A: f64 = 0.044_715;
        unary(
            self,
            |x| 0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh()),
            |x, _| {
                let u = C * (x + A * x * x * x);
                let t = u.tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * A * x * x)
            },
        )
    }

    /// Elementwise square root. The derivative at exactly zero is defined
    /// as zero so degenerate bones never produce NaN gradients.
    pub fn sqrt(&self) -> Tensor {
        unary(self, |x| x.sqrt(), |_, y| if y > 0.0 { 0.5 / y } else { 0.0 })
    }

    pub fn abs(&self) -> Tensor {
        unary(self, |x| x.abs(), |x, _| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
    }

    /// Matrix product on the last two axes. Either both operands share
    /// identical leading batch dims, or `other` is rank-2 and applied to
    /// every batch of `self`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (ash, bsh) = (self.shape().to_vec(), other.shape().to_vec());
        assert!(ash.len() >= 2 && bsh.len() >= 2, "matmul: operands must be at least rank 2");
        let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (k2, p) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
        assert_eq!(k, k2, "matmul: inner dims {k} vs {k2} (shapes {ash:?} x {bsh:?})");
        let batch: usize = ash[..ash.len() - 2].iter().product();
        let b_batched = bsh.len() > 2;
        if b_batched {
            assert_eq!(
                ash[..ash.len() - 2],
                bsh[..bsh.len() - 2],
                "matmul: leading batch dims must match (shapes {ash:?} x {bsh:?})"
            );
        }
        let out = mm_raw(&self.data(), &other.data(), batch, m, k, p, b_batched);
        let mut out_shape = ash[..ash.len() - 2].to_vec();
        out_shape.push(m);
        out_shape.push(p);
        let rg = self.requires_grad() || other.requires_grad();
        let node = rg.then(|| {
            let (ac, bc) = (self.clone(), other.clone());
            Node {
                parents: vec![ac.clone(), bc.clone()],
                backward: Box::new(move |g: &[f64]| {
                    let ad = ac.data();
                    let bd = bc.data();
                    if ac.requires_grad() {
                        // ga = g . b^T
                        let bt = if b_batched {
                            transpose_last2(&bd, batch, k, p)
                        } else {
                            transpose_last2(&bd, 1, k, p)
                        };
                        let ga = mm_raw(g, &bt, batch, m, p, k, b_batched);
                        drop(bt);
                        ac.accumulate_grad(&ga);
                    }
                    if bc.requires_grad() {
                        let gb = if b_batched {
                            // per-batch a^T . g
                            let at = transpose_last2(&ad, batch, m, k);
                            mm_raw(&at, g, batch, k, m, p, true)
                        } else {
                            // shared weight: fold batches, gb = a_flat^T . g_flat
                            let at = transpose_last2(&ad, 1, batch * m, k);
                            mm_raw(&at, g, 1, k, batch * m, p, true)
                        };
                        bc.accumulate_grad(&gb);
                    }
                }),
            }
        });
        Tensor::make(out_shape, out, rg, node)
    }

    /// Swap two axes (materializing copy).
    pub fn transpose(&self, a: usize, b: usize) -> Tensor {
        let rank = self.rank();
        assert!(a < rank && b < rank, "transpose: axes ({a},{b}) out of range for rank {rank}");
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(a, b);
        let (out_shape, out) = permute_raw(&self.data(), self.shape(), &perm);
        let rg = self.requires_grad();
        let node = rg.then(|| {
            let ac = self.clone();
            let osh = out_shape.clone();
            let perm_back = perm.clone();
            Node {
                parents: vec![ac.clone()],
                backward: Box::new(move |g: &[f64]| {
                    let (_, ga) = permute_raw(g, &osh, &perm_back);
                    ac.accumulate_grad(&ga);
                }),
            }
        });
        Tensor::make(out_shape, out, rg, node)
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        assert_eq!(
            numel(shape),
            self.len(),
            "reshape: cannot view {:?} as {:?}",
            self.shape(),
            shape
        );
        let rg = self.requires_grad();
        let node = rg.then(|| {
            let ac = self.clone();
            Node {
                parents: vec![ac.clone()],
                backward: Box::new(move |g: &[f64]| ac.accumulate_grad(g)),
            }
        });
        Tensor::make(shape.to_vec(), self.to_vec(), rg, node)
    }

    /// Concatenate along `axis`. All other dims must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Tensor {
        assert!(!parts.is_empty(), "concat: empty input");
        let rank = parts[0].rank();
        assert!(axis < rank, "concat: axis {axis} out of range");
        for t in parts {
            assert_eq!(t.rank(), rank, "concat: rank mismatch");
            for d in 0..rank {
                if d != axis {
                    assert_eq!(t.shape()[d], parts[0].shape()[d], "concat: dim {d} mismatch");
                }
            }
        }
        let axis_total: usize = parts.iter().map(|t| t.shape()[axis]).sum();
        let mut out_shape = parts[0].shape().to_vec();
        out_shape[axis] = axis_total;
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for t in parts {
                let d = t.shape()[axis];
                let td = t.data();
                out.extend_from_slice(&td[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let rg = parts.iter().any(|t| t.requires_grad());
        let node = rg.then(|| {
            let owned: Vec<Tensor> = parts.iter().map(|t| (*t).clone()).collect();
            let sizes: Vec<usize> = owned.iter().map(|t| t.shape()[axis]).collect();
            Node {
                parents: owned.clone(),
                backward: Box::new(move |g: &[f64]| {
                    let mut offset_in_axis = 0usize;
                    for (t, &d) in owned.iter().zip(&sizes) {
                        if t.requires_grad() {
                            let mut gt = vec![0.0; t.len()];
                            for o in 0..outer {
                                let src = (o * axis_total + offset_in_axis) * inner;
                                let dst = o * d * inner;
                                gt[dst..dst + d * inner].copy_from_slice(&g[src..src + d * inner]);
                            }
                            t.accumulate_grad(&gt);
                        }
                        offset_in_axis += d;
                    }
                }),
            }
        });
        Tensor::make(out_shape, out, rg, node)
    }

    /// Select `indices` along `axis`. Backward scatter-adds.
    pub fn gather(&self, axis: usize, indices: &[usize]) -> Tensor {
        let rank = self.rank();
        assert!(axis < rank, "gather: axis {axis} out of range");
        let dim = self.shape()[axis];
        for &i in indices {
            assert!(i < dim, "gather: index {i} out of range for dim {dim}");
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = indices.len();
        let mut out = vec![0.0; numel(&out_shape)];
        {
            let d = self.data();
            for o in 0..outer {
                for (si, &ix) in indices.iter().enumerate() {
                    let src = (o * dim + ix) * inner;
                    let dst = (o * indices.len() + si) * inner;
                    out[dst..dst + inner].copy_from_slice(&d[src..src + inner]);
                }
            }
        }
        let rg = self.requires_grad();
        let node = rg.then(|| {
            let ac = self.clone();
            let idx = indices.to_vec();
            Node {
                parents: vec![ac.clone()],
                backward: Box::new(move |g: &[f64]| {
                    let mut ga = vec![0.0; ac.len()];
                    for o in 0..outer {
                        for (si, &ix) in idx.iter().enumerate() {
                            let dst = (o * dim + ix) * inner;
                            let src = (o * idx.len() + si) * inner;
                            for t in 0..inner {
                                ga[dst + t] += g[src + t];
                            }
                        }
                    }
                    ac.accumulate_grad(&ga);
                }),
            }
        });
        Tensor::make(out_shape, out, rg, node)
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Tensor {
        let rank = self.rank();
        assert!(axis < rank, "softmax: axis {axis} out of range");
        let dim = self.shape()[axis];
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let mut out = vec![0.0; self.len()];
        {
            let d = self.data();
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| (o * dim + j) * inner + i;
                    let mut mx = f64::NEG_INFINITY;
                    for j in 0..dim {
                        mx = mx.max(d[at(j)]);
                    }
                    let mut sum = 0.0;
                    for j in 0..dim {
                        let e = (d[at(j)] - mx).exp();
                        out[at(j)] = e;
                        sum += e;
                    }
                    for j in 0..dim {
                        out[at(j)] /= sum;
                    }
                }
            }
        }
        let rg = self.requires_grad();
        let node = rg.then(|| {
            let ac = self.clone();
            let y = out.clone();
            Node {
                parents: vec![ac.clone()],
                backward: Box::new(move |g: &[f64]| {
                    let mut ga = vec![0.0; y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| (o * dim + j) * inner + i;
                            let mut dot = 0.0;
                            for j in 0..dim {
                                dot += g[at(j)] * y[at(j)];
                            }
                            for j in 0..dim {
                                ga[at(j)] = y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                    ac.accumulate_grad(&ga);
                }),
            }
        });
        Tensor::make(self.shape().to_vec(), out, rg, node)
    }

    /// Normalize the last axis to zero mean, unit variance (population).
    /// Affine scale/shift compose on top via `mul`/`add`.
    pub fn layer_norm(&self, eps: f64) -> Tensor {
        let rank = self.rank();
        assert!(rank >= 1, "layer_norm: rank must be >= 1");
        let dim = self.shape()[rank - 1];
        let lanes = self.len() / dim;
        let mut out = vec![0.0; self.len()];
        let mut inv_sd = vec![0.0; lanes];
        {
            let d = self.data();
            for l in 0..lanes {
                let x = &d[l * dim..(l + 1) * dim];
                let mu = x.iter().sum::<f64>() / dim as f64;
                let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / dim as f64;
                let inv = 1.0 / (var + eps).sqrt();
                inv_sd[l] = inv;
                for (o, v) in out[l * dim..(l + 1) * dim].iter_mut().zip(x) {
                    *o = (v - mu) * inv;
                }
            }
        }
        let rg = self.requires_grad();
        let node = rg.then(|| {
            let ac = self.clone();
            let y = out.clone();
            Node {
                parents: vec![ac.clone()],
                backward: Box::new(move |g: &[f64]| {
                    let mut ga = vec![0.0; y.len()];
                    for l in 0..lanes {
                        let ys = &y[l * dim..(l + 1) * dim];
                        let gs = &g[l * dim..(l + 1) * dim];
                        let gmean = gs.iter().sum::<f64>() / dim as f64;
                        let gydot = gs.iter().zip(ys).map(|(a, b)| a * b).sum::<f64>() / dim as f64;
                        for j in 0..dim {
                            ga[l * dim + j] = inv_sd[l] * (gs[j] - gmean - ys[j] * gydot);
                        }
                    }
                    ac.accumulate_grad(&ga);
                }),
            }
        });
        Tensor::make(self.shape().to_vec(), out, rg, node)
    }

    pub fn sum_all(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let rg = self.requires_grad();
        let node = rg.then(|| {
            let ac = self.clone();
            Node {
                parents: vec![ac.clone()],
                backward: Box::new(move |g: &[f64]| {
                    let ga = vec![g[0]; ac.len()];
                    ac.accumulate_grad(&ga);
                }),
            }
        });
        Tensor::make(vec![], vec![s], rg, node)
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.len() as f64;
        self.sum_all().mul_scalar(1.0 / n)
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Tensor {
        let rank = self.rank();
        assert!(axis < rank, "sum_axis: axis {axis} out of range");
        let dim = self.shape()[axis];
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        {
            let d = self.data();
            for o in 0..outer {
                for j in 0..dim {
                    let base = (o * dim + j) * inner;
                    for i in 0..inner {
                        out[o * inner + i] += d[base + i];
                    }
                }
            }
        }
        let mut out_shape = self.shape().to_vec();
        if keepdim {
            out_shape[axis] = 1;
        } else {
            out_shape.remove(axis);
        }
        let rg = self.requires_grad();
        let node = rg.then(|| {
            let ac = self.clone();
            Node {
                parents: vec![ac.clone()],
                backward: Box::new(move |g: &[f64]| {
                    let mut ga = vec![0.0; ac.len()];
                    for o in 0..outer {
                        for j in 0..dim {
                            let base = (o * dim + j) * inner;
                            for i in 0..inner {
                                ga[base + i] = g[o * inner + i];
                            }
                        }
                    }
                    ac.accumulate_grad(&ga);
                }),
            }
        });
        Tensor::make(out_shape, out, rg, node)
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Tensor {
        let dim = self.shape()[axis] as f64;
        self.sum_axis(axis, keepdim).mul_scalar(1.0 / dim)
    }

    /// Explicit broadcast to a target shape (adds/extends size-1 dims).
    pub fn broadcast_to(&self, shape: &[usize]) -> Tensor {
        let out_shape = broadcast_shapes(self.shape(), shape, "broadcast_to");
        assert_eq!(out_shape, shape, "broadcast_to: {:?} cannot broadcast to {shape:?}", self.shape());
        let mut out = vec![0.0; numel(shape)];
        {
            let d = self.data();
            for_each_bcast(shape, self.shape(), &[], |o, ia, _| out[o] = d[ia]);
        }
        let rg = self.requires_grad();
        let node = rg.then(|| {
            let ac = self.clone();
            let osh = shape.to_vec();
            Node {
                parents: vec![ac.clone()],
                backward: Box::new(move |g: &[f64]| {
                    let mut ga = vec![0.0; ac.len()];
                    for_each_bcast(&osh, ac.shape(), &[], |o, ia, _| ga[ia] += g[o]);
                    ac.accumulate_grad(&ga);
                }),
            }
        });
        Tensor::make(shape.to_vec(), out, rg, node)
    }

    /// Euclidean norm along the last axis, keepdim. Composite op used by the
    /// pose losses; the zero-derivative convention of `sqrt` applies at 0.
    pub fn norm_last(&self) -> Tensor {
        self.mul(self).sum_axis(self.rank() - 1, true).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::from_vec(shape, v.to_vec())
    }

    #[test]
    fn matmul_identity() {
        let i2 = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(i2.matmul(&m).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_zero_row_case() {
        let a = t(&[2, 2], &[1.0, 0.0, 0.0, 0.0]);
        let b = t(&[2, 1], &[0.0, 5.0]);
        assert_eq!(a.matmul(&b).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "inner dims")]
    fn matmul_rejects_shape_mismatch() {
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2, 2], &[0.0; 4]);
        a.matmul(&b);
    }

    #[test]
    fn matmul_batched_matches_loop() {
        let a = t(&[2, 2, 3], &(0..12).map(|v| v as f64).collect::<Vec<_>>());
        let b = t(&[2, 3, 2], &(0..12).map(|v| (v as f64) * 0.5).collect::<Vec<_>>());
        let c = a.matmul(&b);
        assert_eq!(c.shape(), &[2, 2, 2]);
        // spot check batch 1, row 1: a[1,1,:] = [9,10,11]; b[1,:,1] = [3.5,4.5,5.5]
        let expect = 9.0 * 3.5 + 10.0 * 4.5 + 11.0 * 5.5;
        assert!((c.to_vec()[7] - expect).abs() < 1e-12);
    }

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let x = t(&[3], &[0.0, 0.0, 0.0]);
        let y = x.softmax(0);
        for v in y.to_vec() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_analytic_two_to_one() {
        let x = t(&[2], &[2.0f64.ln(), 0.0]);
        let y = x.softmax(0).to_vec();
        assert!((y[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((y[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = crate::tensor::Rng::new(9);
        let x = Tensor::randn(&[4, 7], &mut rng);
        let y = x.softmax(1);
        let d = y.to_vec();
        for r in 0..4 {
            let s: f64 = d[r * 7..(r + 1) * 7].iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
            assert!(d[r * 7..(r + 1) * 7].iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn broadcast_add_bias() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(&[3], &[10.0, 20.0, 30.0]);
        assert_eq!(x.add(&b).to_vec(), vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
    }

    #[test]
    fn broadcast_grad_reduces() {
        let x = Tensor::param(&[2, 3], vec![1.0; 6]);
        let b = Tensor::param(&[3], vec![0.0; 3]);
        x.add(&b).sum_all().backward();
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0, 2.0]);
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn transpose_roundtrip() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = x.transpose(0, 1);
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.to_vec(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(y.transpose(0, 1).to_vec(), x.to_vec());
    }

    #[test]
    fn gather_and_scatter_gradient() {
        let x = Tensor::param(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = x.gather(0, &[2, 0, 2]);
        assert_eq!(y.to_vec(), vec![5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        y.sum_all().backward();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn concat_axis1() {
        let a = t(&[2, 1], &[1.0, 2.0]);
        let b = t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]);
        let c = Tensor::concat(&[&a, &b], 1);
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.to_vec(), vec![1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let x = t(&[2, 4], &[1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 1.0, 8.0]);
        let y = x.layer_norm(1e-12).to_vec();
        for l in 0..2 {
            let lane = &y[l * 4..(l + 1) * 4];
            let mu: f64 = lane.iter().sum::<f64>() / 4.0;
            let var: f64 = lane.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 4.0;
            assert!(mu.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sum_axis_keepdim_shapes() {
        let x = t(&[2, 3, 4], &(0..24).map(|v| v as f64).collect::<Vec<_>>());
        assert_eq!(x.sum_axis(1, true).shape(), &[2, 1, 4]);
        assert_eq!(x.sum_axis(1, false).shape(), &[2, 4]);
        assert_eq!(x.sum_axis(1, false).to_vec()[0], 0.0 + 4.0 + 8.0);
    }
}
