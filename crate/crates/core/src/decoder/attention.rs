use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Scaled dot-product attention over the last two axes.
///
/// `queries` is `(..., G, d)`, `keys` and `values` are `(..., N, d)` with
/// broadcastable leading axes. Returns the responses `(..., G, d)` and the
/// attention weights `(..., G, N)`, whose rows sum to one.
pub fn attention<T: Element>(queries: &Tensor<T>, keys: &Tensor<T>, values: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (qr, kr) = (queries.rank(), keys.rank());
    if qr < 2 || kr < 2 || values.rank() != kr {
        return Err(Error::shape("attention", "queries, keys and values must be at least 2-D"));
    }
    let d = queries.shape()[qr - 1];
    if keys.shape()[kr - 1] != d || keys.shape() != values.shape() {
        return Err(Error::shape(
            "attention",
            format!("queries {:?}, keys {:?}, values {:?}", queries.shape(), keys.shape(), values.shape()),
        ));
    }
    let mut perm: Vec<usize> = (0..kr).collect();
    perm.swap(kr - 2, kr - 1);
    let scores = queries.matmul(&keys.transpose(&perm)?)?.scalar_mul(1.0 / (d as f64).sqrt())?;
    let weights = scores.softmax_lastdim()?;
    let responses = weights.matmul(values)?;
    Ok((responses, weights))
}

/// Single-head cross-attention of `G` query tokens over `N` key/value rows:
/// `softmax(Q K^T / sqrt(d)) V`.
pub fn cross_attention<T: Element>(queries: &Tensor<T>, keys: &Tensor<T>, values: &Tensor<T>) -> Result<Tensor<T>> {
    if queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2 {
        return Err(Error::shape("cross_attention", "expected (G,d), (N,d), (N,d)"));
    }
    attention(queries, keys, values).map(|(r, _)| r)
}
