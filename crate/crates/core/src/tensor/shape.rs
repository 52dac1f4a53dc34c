//! Shape arithmetic shared by the forward kernels and their backward rules.

use crate::error::{Error, Result};

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for a contiguous buffer.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    let mut acc = 1;
    for (s, &d) in out.iter_mut().zip(shape).rev() {
        *s = acc;
        acc *= d;
    }
    out
}

/// Numpy-style broadcast of two shapes.
pub(crate) fn broadcast_shapes(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::shape(op, format!("cannot broadcast {a:?} with {b:?}")));
            }
        };
    }
    Ok(out)
}

/// Strides of `shape` viewed inside the (larger or equal) `target` shape.
/// Broadcast dimensions get stride 0.
pub(crate) fn broadcast_strides(shape: &[usize], target: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let offset = target.len() - shape.len();
    (0..target.len())
        .map(|i| {
            if i < offset || shape[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

/// Walks every multi-index of `shape` in row-major order while tracking one
/// linear offset per auxiliary stride vector.
pub(crate) struct Odometer<'a, const N: usize> {
    shape: &'a [usize],
    strides: [&'a [usize]; N],
    index: Vec<usize>,
    offsets: [usize; N],
    remaining: usize,
}

impl<'a, const N: usize> Odometer<'a, N> {
    pub(crate) fn new(shape: &'a [usize], strides: [&'a [usize]; N]) -> Self {
        Odometer {
            shape,
            strides,
            index: vec![0; shape.len()],
            offsets: [0; N],
            remaining: numel(shape),
        }
    }
}

impl<const N: usize> Iterator for Odometer<'_, N> {
    type Item = [usize; N];

    fn next(&mut self) -> Option<[usize; N]> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let current = self.offsets;
        for axis in (0..self.shape.len()).rev() {
            self.index[axis] += 1;
            for (o, s) in self.offsets.iter_mut().zip(&self.strides) {
                *o += s[axis];
            }
            if self.index[axis] < self.shape[axis] {
                break;
            }
            for (o, s) in self.offsets.iter_mut().zip(&self.strides) {
                *o -= s[axis] * self.shape[axis];
            }
            self.index[axis] = 0;
        }
        Some(current)
    }
}
