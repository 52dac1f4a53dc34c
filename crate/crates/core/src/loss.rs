//! Asymmetric focal loss over independent sigmoid outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchReduction {
    #[default]
    Mean,
    Sum,
}

/// Focusing parameters. `gamma_minus` down-weights easy negatives,
/// `gamma_plus` easy positives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymmetricLossConfig {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub batch_reduction: BatchReduction,
}

impl Default for AsymmetricLossConfig {
    fn default() -> Self {
        AsymmetricLossConfig { gamma_plus: 0.0, gamma_minus: 5.0, batch_reduction: BatchReduction::Mean }
    }
}

impl AsymmetricLossConfig {
    /// Plain summed binary cross-entropy.
    pub fn bce() -> Self {
        AsymmetricLossConfig { gamma_plus: 0.0, gamma_minus: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |g: f64| g.is_finite() && g >= 0.0;
        if !ok(self.gamma_plus) || !ok(self.gamma_minus) {
            return Err(Error::InvalidSpec(format!(
                "focusing parameters must be finite and non-negative, got {} / {}",
                self.gamma_plus, self.gamma_minus
            )));
        }
        Ok(())
    }
}

/// log(sigmoid(z)) without overflow.
fn log_sigmoid(z: f64) -> f64 {
    z.min(0.0) - (-z.abs()).exp().ln_1p()
}

/// Loss of a single logit against a single binary target.
///
/// Positives contribute `-(1-p)^gamma_plus * log p`, negatives
/// `-p^gamma_minus * log(1-p)`, with `p = sigmoid(z)`.
pub fn per_label_loss(z: f64, positive: bool, cfg: &AsymmetricLossConfig) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite("per_label_loss".into()));
    }
    let (log_p, log_q) = (log_sigmoid(z), log_sigmoid(-z));
    Ok(if positive {
        -(cfg.gamma_plus * log_q).exp() * log_p
    } else {
        -(cfg.gamma_minus * log_p).exp() * log_q
    })
}

/// Sums the per-label loss over labels, then reduces over the batch.
///
/// The focusing weights are formed as `exp(gamma * log_sigmoid(±z))`, which
/// equals the power of the probability but stays finite and differentiable
/// when the probability underflows.
pub fn batch_loss<T: Element>(logits: &Tensor<T>, targets: &Tensor<T>, cfg: &AsymmetricLossConfig) -> Result<Tensor<T>> {
    cfg.validate()?;
    if logits.rank() != 2 || logits.shape() != targets.shape() {
        return Err(Error::shape(
            "batch_loss",
            format!("logits {:?} vs targets {:?}", logits.shape(), targets.shape()),
        ));
    }
    if let Some(&bad) = targets.data().iter().find(|&&y| y != T::zero() && y != T::one()) {
        return Err(Error::NonBinaryTarget(bad.to_f64_lossy()));
    }
    let negatives = Tensor::new(targets.data().iter().map(|&y| T::one() - y).collect(), targets.shape())?;
    let log_p = logits.log_sigmoid()?;
    let log_q = logits.neg()?.log_sigmoid()?;
    let pos = log_q.scalar_mul(cfg.gamma_plus)?.exp()?.mul(&log_p)?.mul(targets)?;
    let neg = log_p.scalar_mul(cfg.gamma_minus)?.exp()?.mul(&log_q)?.mul(&negatives)?;
    let per_sample = pos.add(&neg)?.neg()?.sum_axes(&[1])?;
    match cfg.batch_reduction {
        BatchReduction::Mean => per_sample.mean_all(),
        BatchReduction::Sum => per_sample.sum_all(),
    }
}
