//! Forward definitions of the op catalog.
//!
//! Shape rules:
//! - `add`, `sub`, `mul`: numpy broadcasting.
//! - `matmul`: `(..., m, k) x (..., k, n) -> (..., m, n)`, batch dims broadcast.
//! - `conv2d`: `(B, H, W, Cin) * (KH, KW, Cin, Cout)` with stride and symmetric zero padding.
//! - `softmax_lastdim`, `layer_norm_lastdim`: normalize along the last axis.
//! - `mean_axes`, `sum_axes`: reduce the listed axes and drop them.
//! - `pad2d`, `max_pool2d`: spatial ops on `(B, H, W, C)`.
//! - `narrow_lastdim`: keep a contiguous range of the last axis.

use std::fmt;
use std::str::FromStr;

use super::autograd::Saved;
use super::kernels::{self, ConvGeom, MatmulPlan, Padding};
use super::shape::{broadcast_shapes, broadcast_strides, numel, Odometer};
use super::{Element, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    ScalarMul,
    Matmul,
    Conv2d,
    Relu,
    Sigmoid,
    SoftmaxLastdim,
    Log,
    Exp,
    Power,
    MeanAxes,
    SumAxes,
    Reshape,
    Transpose,
    LayerNormLastdim,
    Pad2d,
    MaxPool2d,
    LogSigmoid,
    NarrowLastdim,
}

impl OpKind {
    pub const ALL: [OpKind; 21] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::ScalarMul,
        OpKind::Matmul,
        OpKind::Conv2d,
        OpKind::Relu,
        OpKind::Sigmoid,
        OpKind::SoftmaxLastdim,
        OpKind::Log,
        OpKind::Exp,
        OpKind::Power,
        OpKind::MeanAxes,
        OpKind::SumAxes,
        OpKind::Reshape,
        OpKind::Transpose,
        OpKind::LayerNormLastdim,
        OpKind::Pad2d,
        OpKind::MaxPool2d,
        OpKind::LogSigmoid,
        OpKind::NarrowLastdim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::ScalarMul => "scalar_mul",
            OpKind::Matmul => "matmul",
            OpKind::Conv2d => "conv2d",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::SoftmaxLastdim => "softmax_lastdim",
            OpKind::Log => "log",
            OpKind::Exp => "exp",
            OpKind::Power => "power",
            OpKind::MeanAxes => "mean_axes",
            OpKind::SumAxes => "sum_axes",
            OpKind::Reshape => "reshape",
            OpKind::Transpose => "transpose",
            OpKind::LayerNormLastdim => "layer_norm_lastdim",
            OpKind::Pad2d => "pad2d",
            OpKind::MaxPool2d => "max_pool2d",
            OpKind::LogSigmoid => "log_sigmoid",
            OpKind::NarrowLastdim => "narrow_lastdim",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::UnsupportedOp(s.to_string()))
    }
}

/// Op attributes for the generic [`forward`] entry point.
#[derive(Clone, Debug, PartialEq)]
pub enum Attrs {
    None,
    Scalar(f64),
    Axes(Vec<usize>),
    Shape(Vec<usize>),
    Conv { stride: usize, padding: usize },
    Pad { top: usize, bottom: usize, left: usize, right: usize },
    Pool { kernel: usize, stride: usize },
    Narrow { start: usize, len: usize },
}

/// Applies `op` to `inputs`, dispatching to the typed methods on [`Tensor`].
pub fn forward<T: Element>(op: OpKind, inputs: &[&Tensor<T>], attrs: &Attrs) -> Result<Tensor<T>> {
    let bad_attrs = || Error::shape(op.name(), format!("unexpected attributes {attrs:?}"));
    let arity = match op {
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Matmul | OpKind::Conv2d => 2,
        _ => 1,
    };
    if inputs.len() != arity {
        return Err(Error::shape(op.name(), format!("expected {arity} inputs, got {}", inputs.len())));
    }
    let x = inputs[0];
    match (op, attrs) {
        (OpKind::Add, Attrs::None) => x.add(inputs[1]),
        (OpKind::Sub, Attrs::None) => x.sub(inputs[1]),
        (OpKind::Mul, Attrs::None) => x.mul(inputs[1]),
        (OpKind::Matmul, Attrs::None) => x.matmul(inputs[1]),
        (OpKind::Conv2d, &Attrs::Conv { stride, padding }) => x.conv2d(inputs[1], stride, padding),
        (OpKind::ScalarMul, &Attrs::Scalar(c)) => x.scalar_mul(c),
        (OpKind::Power, &Attrs::Scalar(c)) => x.power(c),
        (OpKind::LayerNormLastdim, &Attrs::Scalar(eps)) => x.layer_norm_lastdim(eps),
        (OpKind::Relu, Attrs::None) => x.relu(),
        (OpKind::Sigmoid, Attrs::None) => x.sigmoid(),
        (OpKind::SoftmaxLastdim, Attrs::None) => x.softmax_lastdim(),
        (OpKind::Log, Attrs::None) => x.log(),
        (OpKind::Exp, Attrs::None) => x.exp(),
        (OpKind::LogSigmoid, Attrs::None) => x.log_sigmoid(),
        (OpKind::MeanAxes, Attrs::Axes(axes)) => x.mean_axes(axes),
        (OpKind::SumAxes, Attrs::Axes(axes)) => x.sum_axes(axes),
        (OpKind::Reshape, Attrs::Shape(shape)) => x.reshape(shape),
        (OpKind::Transpose, Attrs::Axes(perm)) => x.transpose(perm),
        (OpKind::Pad2d, &Attrs::Pad { top, bottom, left, right }) => x.pad2d(top, bottom, left, right),
        (OpKind::MaxPool2d, &Attrs::Pool { kernel, stride }) => x.max_pool2d(kernel, stride),
        (OpKind::NarrowLastdim, &Attrs::Narrow { start, len }) => x.narrow_lastdim(start, len),
        _ => Err(bad_attrs()),
    }
}

#[inline]
pub(crate) fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// log(sigmoid(x)) = -softplus(-x), stable for large |x|.
#[inline]
pub(crate) fn log_sigmoid<T: Element>(x: T) -> T {
    x.min(T::zero()) - (-x.abs()).exp().ln_1p()
}

fn map<T: Element>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Vec<T> {
    x.data().iter().map(|&v| f(v)).collect()
}

impl<T: Element> Tensor<T> {
    fn binary(&self, other: &Tensor<T>, op: OpKind, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let out_shape = broadcast_shapes(op.name(), self.shape(), other.shape())?;
        let data: Vec<T> = if self.shape() == other.shape() {
            self.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect()
        } else {
            let sa = broadcast_strides(self.shape(), &out_shape);
            let sb = broadcast_strides(other.shape(), &out_shape);
            let (a, b) = (self.data(), other.data());
            Odometer::new(&out_shape, [&sa, &sb]).map(|[i, j]| f(a[i], b[j])).collect()
        };
        Tensor::from_op(data, out_shape, op, vec![self.clone(), other.clone()], Saved::None)
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, OpKind::Add, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, OpKind::Sub, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, OpKind::Mul, |a, b| a * b)
    }

    pub fn scalar_mul(&self, c: f64) -> Result<Tensor<T>> {
        let c = T::from_f64_lossy(c);
        Tensor::from_op(map(self, |v| v * c), self.shape().to_vec(), OpKind::ScalarMul, vec![self.clone()], Saved::Factor(c))
    }

    pub fn neg(&self) -> Result<Tensor<T>> {
        self.scalar_mul(-1.0)
    }

    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let plan = MatmulPlan::new(self.shape(), other.shape())?;
        let data = kernels::matmul_forward(&plan, self.data(), other.data());
        Tensor::from_op(data, plan.out_shape(), OpKind::Matmul, vec![self.clone(), other.clone()], Saved::Matmul(plan))
    }

    /// NHWC convolution with `(KH, KW, Cin, Cout)` weights.
    pub fn conv2d(&self, weight: &Tensor<T>, stride: usize, padding: usize) -> Result<Tensor<T>> {
        let geom = ConvGeom::new(self.shape(), weight.shape(), stride, padding)?;
        let data = kernels::conv2d_forward(&geom, self.data(), weight.data());
        Tensor::from_op(data, geom.out_shape(), OpKind::Conv2d, vec![self.clone(), weight.clone()], Saved::Conv(geom))
    }

    pub fn relu(&self) -> Result<Tensor<T>> {
        super::note_kink_distance(self.data());
        let data = map(self, |v| if v > T::zero() { v } else { T::zero() });
        Tensor::from_op(data, self.shape().to_vec(), OpKind::Relu, vec![self.clone()], Saved::None)
    }

    pub fn sigmoid(&self) -> Result<Tensor<T>> {
        Tensor::from_op(map(self, sigmoid), self.shape().to_vec(), OpKind::Sigmoid, vec![self.clone()], Saved::None)
    }

    /// Numerically stable `log(sigmoid(x))`.
    pub fn log_sigmoid(&self) -> Result<Tensor<T>> {
        Tensor::from_op(map(self, log_sigmoid), self.shape().to_vec(), OpKind::LogSigmoid, vec![self.clone()], Saved::None)
    }

    pub fn softmax_lastdim(&self) -> Result<Tensor<T>> {
        let n = *self.shape().last().ok_or_else(|| Error::shape("softmax_lastdim", "rank-0 input"))?;
        let mut data = self.to_vec();
        for row in data.chunks_mut(n) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            row.iter_mut().for_each(|v| *v = *v / total);
        }
        Tensor::from_op(data, self.shape().to_vec(), OpKind::SoftmaxLastdim, vec![self.clone()], Saved::None)
    }

    pub fn log(&self) -> Result<Tensor<T>> {
        Tensor::from_op(map(self, T::ln), self.shape().to_vec(), OpKind::Log, vec![self.clone()], Saved::None)
    }

    pub fn exp(&self) -> Result<Tensor<T>> {
        Tensor::from_op(map(self, T::exp), self.shape().to_vec(), OpKind::Exp, vec![self.clone()], Saved::None)
    }

    /// Elementwise `x^c` for a constant exponent.
    pub fn power(&self, c: f64) -> Result<Tensor<T>> {
        let e = T::from_f64_lossy(c);
        let data = if c == 0.0 { vec![T::one(); self.numel()] } else { map(self, |v| v.powf(e)) };
        Tensor::from_op(data, self.shape().to_vec(), OpKind::Power, vec![self.clone()], Saved::Factor(e))
    }

    pub fn sum_axes(&self, axes: &[usize]) -> Result<Tensor<T>> {
        let axes = kernels::check_axes("sum_axes", self.rank(), axes)?;
        let (shape, keep, data) = kernels::sum_axes(self.shape(), self.data(), &axes);
        Tensor::from_op(data, shape, OpKind::SumAxes, vec![self.clone()], Saved::Reduce { keep, scale: T::one() })
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Result<Tensor<T>> {
        let axes = kernels::check_axes("mean_axes", self.rank(), axes)?;
        let count: usize = axes.iter().map(|&a| self.shape()[a]).product();
        let scale = T::one() / T::from_usize(count).unwrap();
        let (shape, keep, mut data) = kernels::sum_axes(self.shape(), self.data(), &axes);
        data.iter_mut().for_each(|v| *v = *v * scale);
        Tensor::from_op(data, shape, OpKind::MeanAxes, vec![self.clone()], Saved::Reduce { keep, scale })
    }

    pub fn sum_all(&self) -> Result<Tensor<T>> {
        self.sum_axes(&(0..self.rank()).collect::<Vec<_>>())
    }

    pub fn mean_all(&self) -> Result<Tensor<T>> {
        self.mean_axes(&(0..self.rank()).collect::<Vec<_>>())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() || shape.contains(&0) {
            return Err(Error::shape("reshape", format!("{:?} -> {shape:?}", self.shape())));
        }
        Tensor::from_op(self.to_vec(), shape.to_vec(), OpKind::Reshape, vec![self.clone()], Saved::None)
    }

    /// Permutes axes: output axis `i` is input axis `perm[i]`.
    pub fn transpose(&self, perm: &[usize]) -> Result<Tensor<T>> {
        let shape = kernels::transpose_shape(self.shape(), perm)?;
        let data = kernels::transpose_data(self.shape(), self.data(), perm);
        Tensor::from_op(data, shape, OpKind::Transpose, vec![self.clone()], Saved::Perm(perm.to_vec()))
    }

    /// Normalizes the last axis to zero mean and unit variance (no affine part).
    pub fn layer_norm_lastdim(&self, eps: f64) -> Result<Tensor<T>> {
        let n = *self.shape().last().ok_or_else(|| Error::shape("layer_norm_lastdim", "rank-0 input"))?;
        let eps = T::from_f64_lossy(eps);
        let nf = T::from_usize(n).unwrap();
        let mut normed = self.to_vec();
        let mut inv_std = Vec::with_capacity(self.numel() / n);
        for row in normed.chunks_mut(n) {
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let inv = T::one() / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv_std.push(inv);
        }
        let data = normed.clone();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            OpKind::LayerNormLastdim,
            vec![self.clone()],
            Saved::LayerNorm { normed, inv_std },
        )
    }

    /// Zero-pads the spatial axes of a `(B, H, W, C)` tensor.
    pub fn pad2d(&self, top: usize, bottom: usize, left: usize, right: usize) -> Result<Tensor<T>> {
        if self.rank() != 4 {
            return Err(Error::shape("pad2d", format!("input must be (B,H,W,C), got {:?}", self.shape())));
        }
        let p = Padding { top, bottom, left, right };
        let (shape, data) = kernels::pad2d_forward(self.shape(), self.data(), p);
        Tensor::from_op(data, shape, OpKind::Pad2d, vec![self.clone()], Saved::Pad(p))
    }

    pub fn max_pool2d(&self, kernel: usize, stride: usize) -> Result<Tensor<T>> {
        let (shape, data, argmax) = kernels::max_pool2d_forward(self.shape(), self.data(), kernel, stride)?;
        Tensor::from_op(data, shape, OpKind::MaxPool2d, vec![self.clone()], Saved::Pool(argmax))
    }

    /// Keeps `len` entries of the last axis starting at `start`.
    pub fn narrow_lastdim(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        let n = *self.shape().last().ok_or_else(|| Error::shape("narrow_lastdim", "rank-0 input"))?;
        if len == 0 || start + len > n {
            return Err(Error::shape("narrow_lastdim", format!("range {start}..{} exceeds {n}", start + len)));
        }
        let data = self.data().chunks(n).flat_map(|row| row[start..start + len].iter().copied()).collect();
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        Tensor::from_op(data, shape, OpKind::NarrowLastdim, vec![self.clone()], Saved::Narrow { start, len })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::from_f64(data, shape).unwrap()
    }

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(t(&[0.0], &[1]).sigmoid().unwrap().data(), &[0.5]);
    }

    #[test]
    fn matmul_identity() {
        let a = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let i = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        assert_eq!(a.matmul(&i).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(a.matmul(&t(&[1.0; 3], &[3, 1])), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn softmax_uniform() {
        let s = t(&[1.0; 4], &[4]).softmax_lastdim().unwrap();
        assert_eq!(s.data(), &[0.25; 4]);
    }

    #[test]
    fn softmax_survives_large_inputs() {
        let s = t(&[1000.0, 0.0], &[2]).softmax_lastdim().unwrap();
        assert!(s.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mean_over_leading_axes() {
        // channel 0 holds 1,2,3,4
        let mut data = Vec::new();
        for v in [1.0, 2.0, 3.0, 4.0] {
            data.extend([v, 10.0 * v, -v]);
        }
        let m = t(&data, &[2, 2, 3]).mean_axes(&[0, 1]).unwrap();
        assert_eq!(m.shape(), &[3]);
        assert_eq!(m.data(), &[2.5, 25.0, -2.5]);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(-800.0f64) + 800.0).abs() < 1e-12);
        assert!(log_sigmoid(800.0f64).abs() < 1e-300);
        assert!((log_sigmoid(0.0f64) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn op_names_parse() {
        for op in OpKind::ALL {
            assert_eq!(op.name().parse::<OpKind>().unwrap(), op);
        }
        assert!(matches!("gelu".parse::<OpKind>(), Err(Error::UnsupportedOp(_))));
    }

    #[test]
    fn generic_forward_dispatch() {
        let x = t(&[1.0, -2.0], &[2]);
        let y = forward(OpKind::Relu, &[&x], &Attrs::None).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0]);
        assert!(forward(OpKind::Relu, &[&x, &x], &Attrs::None).is_err());
        assert!(forward(OpKind::Power, &[&x], &Attrs::None).is_err());
    }

    #[test]
    fn finite_check_flags_nan() {
        super::super::set_finite_check(true);
        let r = t(&[-1.0], &[1]).log();
        super::super::set_finite_check(false);
        assert!(matches!(r, Err(Error::NonFinite(op)) if op == "log"));
    }

    #[test]
    fn narrow_keeps_prefix() {
        let x = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        assert_eq!(x.narrow_lastdim(0, 2).unwrap().data(), &[1.0, 2.0, 4.0, 5.0]);
    }
}
