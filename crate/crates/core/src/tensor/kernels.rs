//! Numeric kernels behind the heavier ops. Everything here works on flat
//! row-major slices; graph bookkeeping lives in `ops` and `autograd`.

use rayon::prelude::*;

use super::shape::{broadcast_shapes, broadcast_strides, numel, strides, Odometer};
use super::Element;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// matmul

#[derive(Clone, Debug)]
pub(crate) struct MatmulPlan {
    pub batch: Vec<usize>,
    a_strides: Vec<usize>,
    b_strides: Vec<usize>,
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

impl MatmulPlan {
    pub(crate) fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() < 2 || b.len() < 2 {
            return Err(Error::shape("matmul", format!("operands must be at least 2-D, got {a:?} and {b:?}")));
        }
        let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
        let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
        if k != k2 {
            return Err(Error::shape("matmul", format!("inner dims differ: {a:?} x {b:?}")));
        }
        let a_batch = &a[..a.len() - 2];
        let b_batch = &b[..b.len() - 2];
        let batch = broadcast_shapes("matmul", a_batch, b_batch)?;
        let a_strides = broadcast_strides(a_batch, &batch).iter().map(|s| s * m * k).collect();
        let b_strides = broadcast_strides(b_batch, &batch).iter().map(|s| s * k * n).collect();
        Ok(MatmulPlan { batch, a_strides, b_strides, m, k, n })
    }

    pub(crate) fn out_shape(&self) -> Vec<usize> {
        let mut s = self.batch.clone();
        s.extend([self.m, self.n]);
        s
    }

    fn pairs(&self) -> Odometer<'_, 2> {
        Odometer::new(&self.batch, [&self.a_strides, &self.b_strides])
    }
}

pub(crate) fn matmul_forward<T: Element>(plan: &MatmulPlan, a: &[T], b: &[T]) -> Vec<T> {
    let (m, k, n) = (plan.m, plan.k, plan.n);
    let mut out = vec![T::zero(); numel(&plan.batch) * m * n];
    for (chunk, [ao, bo]) in out.chunks_mut(m * n).zip(plan.pairs()) {
        let a = &a[ao..ao + m * k];
        let b = &b[bo..bo + k * n];
        for i in 0..m {
            let row = &mut chunk[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                let brow = &b[p * n..(p + 1) * n];
                row.iter_mut().zip(brow).for_each(|(c, &bv)| *c = *c + av * bv);
            }
        }
    }
    out
}

pub(crate) fn matmul_backward<T: Element>(
    plan: &MatmulPlan,
    a: &[T],
    b: &[T],
    g: &[T],
) -> (Vec<T>, Vec<T>) {
    let (m, k, n) = (plan.m, plan.k, plan.n);
    let mut da = vec![T::zero(); a.len()];
    let mut db = vec![T::zero(); b.len()];
    for (gc, [ao, bo]) in g.chunks(m * n).zip(plan.pairs()) {
        let am = &a[ao..ao + m * k];
        let bm = &b[bo..bo + k * n];
        let dam = &mut da[ao..ao + m * k];
        for i in 0..m {
            let grow = &gc[i * n..(i + 1) * n];
            for p in 0..k {
                let brow = &bm[p * n..(p + 1) * n];
                let dot: T = grow.iter().zip(brow).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                dam[i * k + p] = dam[i * k + p] + dot;
            }
        }
        let dbm = &mut db[bo..bo + k * n];
        for i in 0..m {
            let grow = &gc[i * n..(i + 1) * n];
            for p in 0..k {
                let av = am[i * k + p];
                let drow = &mut dbm[p * n..(p + 1) * n];
                drow.iter_mut().zip(grow).for_each(|(d, &gv)| *d = *d + av * gv);
            }
        }
    }
    (da, db)
}

// ---------------------------------------------------------------------------
// conv2d, NHWC input with (kh, kw, cin, cout) weights

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub(crate) fn new(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let [batch, h, wd, cin] = *x else {
            return Err(Error::shape("conv2d", format!("input must be (B,H,W,C), got {x:?}")));
        };
        let [kh, kw, wcin, cout] = *w else {
            return Err(Error::shape("conv2d", format!("weight must be (KH,KW,Cin,Cout), got {w:?}")));
        };
        if wcin != cin {
            return Err(Error::shape("conv2d", format!("input has {cin} channels, weight expects {wcin}")));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d", "stride must be positive"));
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::shape("conv2d", format!("kernel {kh}x{kw} larger than padded input {h}x{wd}")));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        Ok(ConvGeom { batch, h, w: wd, cin, kh, kw, cout, stride, pad, oh, ow })
    }

    pub(crate) fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.oh, self.ow, self.cout]
    }

    /// Input row/col touched by output position `o` and kernel tap `k`.
    #[inline]
    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k).checked_sub(self.pad)?;
        (pos < limit).then_some(pos)
    }
}

pub(crate) fn conv2d_forward<T: Element>(g: &ConvGeom, x: &[T], w: &[T]) -> Vec<T> {
    let in_len = g.h * g.w * g.cin;
    let out_len = g.oh * g.ow * g.cout;
    let mut out = vec![T::zero(); g.batch * out_len];
    out.par_chunks_mut(out_len).zip(x.par_chunks(in_len)).for_each(|(out, x)| {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let acc = &mut out[(oy * g.ow + ox) * g.cout..][..g.cout];
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.h) else { continue };
                    for kx in 0..g.kw {
                        let Some(ix) = g.src(ox, kx, g.w) else { continue };
                        let px = &x[(iy * g.w + ix) * g.cin..][..g.cin];
                        let wbase = (ky * g.kw + kx) * g.cin * g.cout;
                        for (ci, &xv) in px.iter().enumerate() {
                            let wrow = &w[wbase + ci * g.cout..][..g.cout];
                            acc.iter_mut().zip(wrow).for_each(|(a, &wv)| *a = *a + xv * wv);
                        }
                    }
                }
            }
        }
    });
    out
}

pub(crate) fn conv2d_backward<T: Element>(g: &ConvGeom, x: &[T], w: &[T], grad: &[T]) -> (Vec<T>, Vec<T>) {
    let in_len = g.h * g.w * g.cin;
    let out_len = g.oh * g.ow * g.cout;
    let mut dx = vec![T::zero(); x.len()];
    // Per-sample weight gradients are reduced afterwards in batch order so the
    // result does not depend on the thread count.
    let partial: Vec<Vec<T>> = dx
        .par_chunks_mut(in_len)
        .zip(x.par_chunks(in_len))
        .zip(grad.par_chunks(out_len))
        .map(|((dx, x), gs)| {
            let mut dw = vec![T::zero(); w.len()];
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let go = &gs[(oy * g.ow + ox) * g.cout..][..g.cout];
                    for ky in 0..g.kh {
                        let Some(iy) = g.src(oy, ky, g.h) else { continue };
                        for kx in 0..g.kw {
                            let Some(ix) = g.src(ox, kx, g.w) else { continue };
                            let pix = (iy * g.w + ix) * g.cin;
                            let wbase = (ky * g.kw + kx) * g.cin * g.cout;
                            for ci in 0..g.cin {
                                let wrow = &w[wbase + ci * g.cout..][..g.cout];
                                let dot = wrow.iter().zip(go).fold(T::zero(), |a, (&wv, &gv)| a + wv * gv);
                                dx[pix + ci] = dx[pix + ci] + dot;
                                let xv = x[pix + ci];
                                let drow = &mut dw[wbase + ci * g.cout..][..g.cout];
                                drow.iter_mut().zip(go).for_each(|(d, &gv)| *d = *d + xv * gv);
                            }
                        }
                    }
                }
            }
            dw
        })
        .collect();
    let mut dw = vec![T::zero(); w.len()];
    for p in &partial {
        dw.iter_mut().zip(p).for_each(|(d, &v)| *d = *d + v);
    }
    (dx, dw)
}

// ---------------------------------------------------------------------------
// NHWC zero padding and max pooling

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

pub(crate) fn pad2d_forward<T: Element>(shape: &[usize], x: &[T], p: Padding) -> (Vec<usize>, Vec<T>) {
    let (b, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
    let (oh, ow) = (h + p.top + p.bottom, w + p.left + p.right);
    let mut out = vec![T::zero(); b * oh * ow * c];
    for n in 0..b {
        for y in 0..h {
            let src = &x[((n * h + y) * w) * c..][..w * c];
            let dst = &mut out[((n * oh + y + p.top) * ow + p.left) * c..][..w * c];
            dst.copy_from_slice(src);
        }
    }
    (vec![b, oh, ow, c], out)
}

pub(crate) fn pad2d_backward<T: Element>(in_shape: &[usize], g: &[T], p: Padding) -> Vec<T> {
    let (b, h, w, c) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let ow = w + p.left + p.right;
    let oh = h + p.top + p.bottom;
    let mut dx = vec![T::zero(); b * h * w * c];
    for n in 0..b {
        for y in 0..h {
            let src = &g[((n * oh + y + p.top) * ow + p.left) * c..][..w * c];
            dx[((n * h + y) * w) * c..][..w * c].copy_from_slice(src);
        }
    }
    dx
}

/// Returns output shape, values, and the flat input index each output came from.
pub(crate) fn max_pool2d_forward<T: Element>(
    shape: &[usize],
    x: &[T],
    kernel: usize,
    stride: usize,
) -> Result<(Vec<usize>, Vec<T>, Vec<usize>)> {
    let [b, h, w, c] = *shape else {
        return Err(Error::shape("max_pool2d", format!("input must be (B,H,W,C), got {shape:?}")));
    };
    if kernel == 0 || stride == 0 || kernel > h || kernel > w {
        return Err(Error::shape("max_pool2d", format!("kernel {kernel} stride {stride} invalid for {h}x{w}")));
    }
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = Vec::with_capacity(b * oh * ow * c);
    let mut argmax = Vec::with_capacity(out.capacity());
    for n in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    let mut best_v = T::neg_infinity();
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let idx = ((n * h + oy * stride + ky) * w + ox * stride + kx) * c + ch;
                            if best == usize::MAX || x[idx] > best_v {
                                best = idx;
                                best_v = x[idx];
                            }
                        }
                    }
                    out.push(best_v);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((vec![b, oh, ow, c], out, argmax))
}

// ---------------------------------------------------------------------------
// axis permutation and reduction

pub(crate) fn transpose_shape(shape: &[usize], perm: &[usize]) -> Result<Vec<usize>> {
    let mut seen = vec![false; shape.len()];
    if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::shape("transpose", format!("{perm:?} is not a permutation of rank {}", shape.len())));
    }
    Ok(perm.iter().map(|&p| shape[p]).collect())
}

pub(crate) fn transpose_data<T: Element>(shape: &[usize], x: &[T], perm: &[usize]) -> Vec<T> {
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let st = strides(shape);
    let src_strides: Vec<usize> = perm.iter().map(|&p| st[p]).collect();
    Odometer::new(&out_shape, [&src_strides]).map(|[o]| x[o]).collect()
}

pub(crate) fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Sums `x` (shape `shape`) down onto `target`, where `target` broadcasts to `shape`.
pub(crate) fn reduce_to<T: Element>(shape: &[usize], x: &[T], target: &[usize]) -> Vec<T> {
    if shape == target {
        return x.to_vec();
    }
    let mut out = vec![T::zero(); numel(target)];
    let ts = broadcast_strides(target, shape);
    for (v, [o]) in x.iter().zip(Odometer::new(shape, [&ts])) {
        out[o] = out[o] + *v;
    }
    out
}

/// Normalized, deduplicated reduction axes.
pub(crate) fn check_axes(op: &'static str, rank: usize, axes: &[usize]) -> Result<Vec<usize>> {
    let mut ax = axes.to_vec();
    ax.sort_unstable();
    ax.dedup();
    if ax.iter().any(|&a| a >= rank) {
        return Err(Error::shape(op, format!("axes {axes:?} out of range for rank {rank}")));
    }
    Ok(ax)
}

/// Sum over `axes`, returning (kept shape, shape with reduced axes set to 1, data).
pub(crate) fn sum_axes<T: Element>(shape: &[usize], x: &[T], axes: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<T>) {
    let keep: Vec<usize> = shape
        .iter()
        .enumerate()
        .map(|(i, &d)| if axes.contains(&i) { 1 } else { d })
        .collect();
    let out_shape: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|(i, _)| !axes.contains(i))
        .map(|(_, &d)| d)
        .collect();
    let data = reduce_to(shape, x, &keep);
    (out_shape, keep, data)
}

/// Expands `g` (broadcastable to `shape`) to the full `shape`.
pub(crate) fn expand_to<T: Element>(g_shape: &[usize], g: &[T], shape: &[usize]) -> Vec<T> {
    let gs = broadcast_strides(g_shape, shape);
    Odometer::new(shape, [&gs]).map(|[o]| g[o]).collect()
}
