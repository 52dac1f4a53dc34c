//! Reverse-mode sweep over the recorded graph.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use super::kernels::{self, ConvGeom, MatmulPlan, Padding};
use super::ops::{sigmoid, OpKind};
use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Values captured during forward that the backward rule needs.
pub(crate) enum Saved<T: Element> {
    None,
    Factor(T),
    Matmul(MatmulPlan),
    Conv(ConvGeom),
    Reduce { keep: Vec<usize>, scale: T },
    Perm(Vec<usize>),
    LayerNorm { normed: Vec<T>, inv_std: Vec<T> },
    Pad(Padding),
    Pool(Vec<usize>),
    Narrow { start: usize, len: usize },
}

/// Link from an op output back to its inputs.
pub struct GraphNode<T: Element> {
    pub(crate) op: OpKind,
    pub(crate) parents: Vec<Tensor<T>>,
    pub(crate) saved: Saved<T>,
}

impl<T: Element> GraphNode<T> {
    pub fn op(&self) -> OpKind {
        self.op
    }

    pub fn parents(&self) -> &[Tensor<T>] {
        &self.parents
    }
}

impl<T: Element> Drop for GraphNode<T> {
    // Unlinks long chains iteratively; recursive Arc drops would otherwise
    // recurse once per graph level.
    fn drop(&mut self) {
        let mut stack = std::mem::take(&mut self.parents);
        while let Some(t) = stack.pop() {
            if let Ok(mut inner) = Arc::try_unwrap(t.inner) {
                if let Some(node) = inner.node.as_mut() {
                    stack.append(&mut node.parents);
                }
            }
        }
    }
}

thread_local! {
    static FAULT: Cell<Option<OpKind>> = const { Cell::new(None) };
}

/// Test hook: while set, the backward rule of `op` on this thread returns
/// gradients scaled by 1.5. Used to prove the gradient checker catches a
/// broken rule.
#[doc(hidden)]
pub fn inject_backward_fault(op: Option<OpKind>) {
    FAULT.with(|f| f.set(op));
}

/// Nodes reachable from `root` through grad-requiring edges, parents before children.
fn topo_order<T: Element>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    let mut stack = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(node) = t.node() {
            for p in node.parents.iter().rev() {
                if p.requires_grad() && !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }
    order
}

impl<T: Element> Tensor<T> {
    /// Accumulates d(self)/d(leaf) into every reachable leaf that requires grad.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NotScalar(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Err(Error::DetachedGraph);
        }
        let order = topo_order(self);
        let mut pending: HashMap<u64, Vec<T>> = HashMap::new();
        pending.insert(self.id(), vec![T::one()]);
        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.id()) else { continue };
            if t.retains_grad() {
                t.accumulate_grad(&g);
            }
            let Some(node) = t.node() else { continue };
            let mut grads = parent_grads(node, t, &g);
            if FAULT.with(Cell::get) == Some(node.op) {
                let k = T::from_f64_lossy(1.5);
                grads.iter_mut().flatten().flatten().for_each(|v| *v = *v * k);
            }
            for (p, pg) in node.parents.iter().zip(grads) {
                let Some(pg) = pg else { continue };
                if !p.requires_grad() {
                    continue;
                }
                match pending.get_mut(&p.id()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a = *a + b),
                    None => {
                        pending.insert(p.id(), pg);
                    }
                }
            }
        }
        Ok(())
    }
}

fn unary<T: Element>(x: &Tensor<T>, g: &[T], f: impl Fn(T, T) -> T) -> Vec<Option<Vec<T>>> {
    vec![Some(x.data().iter().zip(g).map(|(&x, &g)| f(x, g)).collect())]
}

/// Gradient of the node output `out` with respect to each parent, given
/// upstream gradient `g`. `None` for parents that do not need one.
fn parent_grads<T: Element>(node: &GraphNode<T>, out: &Tensor<T>, g: &[T]) -> Vec<Option<Vec<T>>> {
    let ps = &node.parents;
    let want = |i: usize| ps[i].requires_grad();
    let x = &ps[0];
    match (node.op, &node.saved) {
        (OpKind::Add, _) => vec![
            want(0).then(|| kernels::reduce_to(out.shape(), g, ps[0].shape())),
            want(1).then(|| kernels::reduce_to(out.shape(), g, ps[1].shape())),
        ],
        (OpKind::Sub, _) => vec![
            want(0).then(|| kernels::reduce_to(out.shape(), g, ps[0].shape())),
            want(1).then(|| {
                let neg: Vec<T> = g.iter().map(|&v| -v).collect();
                kernels::reduce_to(out.shape(), &neg, ps[1].shape())
            }),
        ],
        (OpKind::Mul, _) => {
            let scaled = |other: &Tensor<T>| -> Vec<T> {
                let o = kernels::expand_to(other.shape(), other.data(), out.shape());
                g.iter().zip(&o).map(|(&a, &b)| a * b).collect()
            };
            vec![
                want(0).then(|| kernels::reduce_to(out.shape(), &scaled(&ps[1]), ps[0].shape())),
                want(1).then(|| kernels::reduce_to(out.shape(), &scaled(&ps[0]), ps[1].shape())),
            ]
        }
        (OpKind::ScalarMul, &Saved::Factor(c)) => vec![Some(g.iter().map(|&v| v * c).collect())],
        (OpKind::Matmul, Saved::Matmul(plan)) => {
            let (da, db) = kernels::matmul_backward(plan, ps[0].data(), ps[1].data(), g);
            vec![want(0).then_some(da), want(1).then_some(db)]
        }
        (OpKind::Conv2d, Saved::Conv(geom)) => {
            let (dx, dw) = kernels::conv2d_backward(geom, ps[0].data(), ps[1].data(), g);
            vec![want(0).then_some(dx), want(1).then_some(dw)]
        }
        (OpKind::Relu, _) => unary(x, g, |x, g| if x > T::zero() { g } else { T::zero() }),
        // sigma(x) * sigma(-x) keeps full relative precision in the tails
        (OpKind::Sigmoid, _) => unary(x, g, |x, g| g * sigmoid(x) * sigmoid(-x)),
        (OpKind::LogSigmoid, _) => unary(x, g, |x, g| g * sigmoid(-x)),
        (OpKind::SoftmaxLastdim, _) => {
            let n = *out.shape().last().unwrap();
            let mut dx = Vec::with_capacity(g.len());
            for (y, gr) in out.data().chunks(n).zip(g.chunks(n)) {
                let dot: T = y.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                dx.extend(y.iter().zip(gr).map(|(&y, &g)| y * (g - dot)));
            }
            vec![Some(dx)]
        }
        (OpKind::Log, _) => unary(x, g, |x, g| g / x),
        (OpKind::Exp, _) => vec![Some(out.data().iter().zip(g).map(|(&y, &g)| g * y).collect())],
        (OpKind::Power, &Saved::Factor(c)) => {
            if c == T::zero() {
                vec![Some(vec![T::zero(); g.len()])]
            } else {
                unary(x, g, |x, g| g * c * x.powf(c - T::one()))
            }
        }
        (OpKind::SumAxes | OpKind::MeanAxes, Saved::Reduce { keep, scale }) => {
            let mut dx = kernels::expand_to(keep, g, x.shape());
            if *scale != T::one() {
                dx.iter_mut().for_each(|v| *v = *v * *scale);
            }
            vec![Some(dx)]
        }
        (OpKind::Reshape, _) => vec![Some(g.to_vec())],
        (OpKind::Transpose, Saved::Perm(perm)) => {
            vec![Some(kernels::transpose_data(out.shape(), g, &kernels::inverse_perm(perm)))]
        }
        (OpKind::LayerNormLastdim, Saved::LayerNorm { normed, inv_std }) => {
            let n = *out.shape().last().unwrap();
            let nf = T::from_usize(n).unwrap();
            let mut dx = Vec::with_capacity(g.len());
            for ((xh, gr), &inv) in normed.chunks(n).zip(g.chunks(n)).zip(inv_std) {
                let sum_g: T = gr.iter().copied().sum();
                let sum_gx: T = gr.iter().zip(xh).map(|(&a, &b)| a * b).sum();
                dx.extend(gr.iter().zip(xh).map(|(&gi, &xi)| inv / nf * (nf * gi - sum_g - xi * sum_gx)));
            }
            vec![Some(dx)]
        }
        (OpKind::Pad2d, &Saved::Pad(p)) => vec![Some(kernels::pad2d_backward(x.shape(), g, p))],
        (OpKind::MaxPool2d, Saved::Pool(argmax)) => {
            let mut dx = vec![T::zero(); x.numel()];
            for (&src, &gv) in argmax.iter().zip(g) {
                dx[src] = dx[src] + gv;
            }
            vec![Some(dx)]
        }
        (OpKind::NarrowLastdim, &Saved::Narrow { start, len }) => {
            let n = *x.shape().last().unwrap();
            let mut dx = vec![T::zero(); x.numel()];
            for (row, gr) in dx.chunks_mut(n).zip(g.chunks(len)) {
                row[start..start + len].copy_from_slice(gr);
            }
            vec![Some(dx)]
        }
        (op, _) => unreachable!("{op} recorded without its saved context"),
    }
}
