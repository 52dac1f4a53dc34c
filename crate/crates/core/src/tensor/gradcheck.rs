//! Central finite-difference verification of analytic gradients.

use super::Tensor;
use crate::error::{Error, Result};

/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares the autodiff gradient of the scalar function `f` at `point`
/// with central differences of step `epsilon`, returning the largest
/// per-coordinate relative error.
///
/// `f` receives a grad-requiring leaf for the analytic pass and plain
/// constants for the probes. A function that does not depend on its input
/// has an analytic gradient of zero.
pub fn finite_difference_check<F>(f: F, point: &Tensor<f64>, epsilon: f64) -> Result<f64>
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
{
    let shape = point.shape().to_vec();
    let leaf = Tensor::param(point.to_vec(), &shape)?;
    let out = f(&leaf)?;
    let value = out.item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite("finite_difference_check".into()));
    }
    let analytic = if out.requires_grad() {
        out.backward()?;
        leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()])
    } else {
        vec![0.0; leaf.numel()]
    };

    let probe = |values: Vec<f64>| -> Result<f64> {
        let v = f(&Tensor::new(values, &shape)?)?.item()?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("finite_difference_check".into()))
        }
    };
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = point.to_vec();
        let mut minus = point.to_vec();
        plus[i] += epsilon;
        minus[i] -= epsilon;
        let numeric = (probe(plus)? - probe(minus)?) / (2.0 * epsilon);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}
