//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable value plus an optional link into the graph
//! that produced it. Leaves created with [`Tensor::param`] collect gradients
//! when [`Tensor::backward`] is called on a scalar downstream of them.
//! Gradients accumulate; call [`Tensor::zero_grad`] between steps when a leaf
//! is reused.

mod autograd;
mod gradcheck;
mod kernels;
mod ops;
pub(crate) mod serialize;
pub(crate) mod shape;

use std::cell::Cell;
use std::fmt;
use std::iter::Sum;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

pub use autograd::{inject_backward_fault, GraphNode};
pub use gradcheck::{finite_difference_check, relative_error};
pub use ops::{forward, Attrs, OpKind};
pub use serialize::{read_tensor, write_tensor, AnyTensor};

/// Floating point element type of a tensor.
pub trait Element:
    Float + FromPrimitive + Default + fmt::Debug + fmt::Display + Send + Sync + Sum + 'static
{
    /// Bytes per element; doubles as the precision tag of the binary format.
    const BYTES: u8;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Element")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Element converts to f64")
    }
}

impl Element for f32 {
    const BYTES: u8 = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Element for f64 {
    const BYTES: u8 = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static CHECK_FINITE: Cell<bool> = const { Cell::new(false) };
    static KINK_MARGIN: Cell<Option<f64>> = const { Cell::new(None) };
}

/// Starts (or stops) recording, for the calling thread, how close any `relu`
/// input comes to its kink at zero. Gradient checks use this to avoid
/// probing at points where central differences straddle the kink.
#[doc(hidden)]
pub fn track_kinks(enabled: bool) {
    KINK_MARGIN.with(|m| m.set(enabled.then_some(f64::INFINITY)));
}

/// Smallest `|x|` seen by `relu` since [`track_kinks`] was enabled.
#[doc(hidden)]
pub fn kink_margin() -> f64 {
    KINK_MARGIN.with(|m| m.get().unwrap_or(f64::INFINITY))
}

pub(crate) fn note_kink_distance<T: Element>(values: &[T]) {
    KINK_MARGIN.with(|m| {
        if let Some(cur) = m.get() {
            let d = values.iter().map(|v| v.abs().to_f64_lossy()).fold(cur, f64::min);
            m.set(Some(d));
        }
    });
}

/// Enables (for the calling thread) the debug mode in which every op output
/// is scanned for NaN/Inf.
pub fn set_finite_check(enabled: bool) {
    CHECK_FINITE.with(|c| c.set(enabled));
}

pub(crate) fn finite_check_enabled() -> bool {
    CHECK_FINITE.with(Cell::get)
}

pub(crate) struct Inner<T: Element> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    retain_grad: AtomicBool,
    grad: Mutex<Option<Vec<T>>>,
    node: Option<GraphNode<T>>,
}

pub struct Tensor<T: Element> {
    inner: Arc<Inner<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { inner: Arc::clone(&self.inner) }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.inner.shape);
        if self.numel() <= 16 {
            s.field("data", &self.inner.data);
        }
        if let Some(node) = &self.inner.node {
            s.field("op", &node.op);
        }
        s.field("requires_grad", &self.inner.requires_grad).finish()
    }
}

fn validate_shape(data_len: usize, shape: &[usize]) -> Result<()> {
    if shape.contains(&0) {
        return Err(Error::shape("new", format!("zero-sized dimension in {shape:?}")));
    }
    if shape::numel(shape) != data_len {
        return Err(Error::shape(
            "new",
            format!("{} values do not fill shape {shape:?}", data_len),
        ));
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    fn build(data: Vec<T>, shape: Vec<usize>, requires_grad: bool, node: Option<GraphNode<T>>) -> Self {
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                retain_grad: AtomicBool::new(false),
                grad: Mutex::new(None),
                node,
            }),
        }
    }

    /// Constant tensor that never receives gradients.
    pub fn new(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        validate_shape(data.len(), shape)?;
        Ok(Self::build(data, shape.to_vec(), false, None))
    }

    /// Leaf tensor that accumulates gradients during backward.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        validate_shape(data.len(), shape)?;
        Ok(Self::build(data, shape.to_vec(), true, None))
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::new(data.iter().map(|&v| T::from_f64_lossy(v)).collect(), shape)
    }

    pub fn scalar(value: T) -> Self {
        Self::build(vec![value], Vec::new(), false, None)
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        Self::new(vec![value; shape::numel(shape)], shape)
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    /// Output of an op. Linked into the graph iff some parent requires grad.
    pub(crate) fn from_op(
        data: Vec<T>,
        shape: Vec<usize>,
        op: OpKind,
        parents: Vec<Tensor<T>>,
        saved: autograd::Saved<T>,
    ) -> Result<Self> {
        debug_assert_eq!(data.len(), shape::numel(&shape));
        if finite_check_enabled() && data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let node = requires_grad.then(|| GraphNode { op, parents, saved });
        Ok(Self::build(data, shape, requires_grad, node))
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.inner.data.iter().map(|v| v.to_f64_lossy()).collect()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.node.is_none()
    }

    pub fn node(&self) -> Option<&GraphNode<T>> {
        self.inner.node.as_ref()
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.id
    }

    /// Single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        match self.inner.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::NotScalar(self.inner.shape.clone())),
        }
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.lock().unwrap().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().unwrap() = None;
    }

    /// Keep the gradient of this intermediate after backward.
    pub fn retain_grad(&self) {
        self.inner.retain_grad.store(true, Ordering::Relaxed);
    }

    pub(crate) fn retains_grad(&self) -> bool {
        self.is_leaf() || self.inner.retain_grad.load(Ordering::Relaxed)
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        let mut slot = self.inner.grad.lock().unwrap();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.inner.data.clone(), self.inner.shape.clone(), false, None)
    }

    /// Same values in another precision, cut from the graph.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        let data = self.inner.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect();
        Tensor::build(data, self.inner.shape.clone(), false, None)
    }
}
