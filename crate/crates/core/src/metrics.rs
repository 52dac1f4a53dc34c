//! Thresholded average precision and its micro / macro means.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Scores in `[0, 1]` with their binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
    /// `(sample, label)` of each entry, when built from a score matrix.
    provenance: Option<Vec<(usize, usize)>>,
}

impl PredictionSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape("prediction_set", format!("{} scores vs {} labels", scores.len(), labels.len())));
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Malformed(format!("score {s} outside [0, 1]")));
        }
        Ok(PredictionSet { scores, labels, provenance: None })
    }

    pub fn with_provenance(mut self, provenance: Vec<(usize, usize)>) -> Result<Self> {
        if provenance.len() != self.scores.len() {
            return Err(Error::shape("prediction_set", "provenance length differs from scores"));
        }
        self.provenance = Some(provenance);
        Ok(self)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn provenance(&self) -> Option<&[(usize, usize)]> {
        self.provenance.as_deref()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Equally spaced thresholds on `[0, 1]`, both ends included.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    count: usize,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid { count: 500 }
    }
}

impl ThresholdGrid {
    pub fn new(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidSpec(format!("threshold grid needs at least 2 points, got {count}")));
        }
        Ok(ThresholdGrid { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn value(&self, i: usize) -> f64 {
        i as f64 / (self.count - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

fn ratios(tp: usize, predicted: usize, positives: usize) -> (f64, f64) {
    let precision = if predicted == 0 { 1.0 } else { tp as f64 / predicted as f64 };
    let recall = if positives == 0 { 0.0 } else { tp as f64 / positives as f64 };
    (precision, recall)
}

/// Precision and recall when every score `>= t` counts as a positive
/// prediction. No predictions gives precision 1; no positives gives recall 0.
pub fn precision_recall_at(preds: &PredictionSet, t: f64) -> Result<(f64, f64)> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut tp, mut predicted) = (0, 0);
    for (&s, &l) in preds.scores.iter().zip(&preds.labels) {
        if s >= t {
            predicted += 1;
            tp += l as usize;
        }
    }
    Ok(ratios(tp, predicted, preds.positives()))
}

/// `sum_n (R_n - R_{n-1}) * P_n` over the grid walked from the highest
/// threshold down, starting from `R_0 = 0`.
pub fn average_precision(preds: &PredictionSet, grid: &ThresholdGrid) -> Result<f64> {
    let positives = preds.positives();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds.scores[b].total_cmp(&preds.scores[a]));

    let (mut cursor, mut tp) = (0, 0);
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for i in (0..grid.count).rev() {
        let t = grid.value(i);
        while cursor < order.len() && preds.scores[order[cursor]] >= t {
            tp += preds.labels[order[cursor]] as usize;
            cursor += 1;
        }
        let (precision, recall) = ratios(tp, cursor, positives);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// One curve over every (sample, label) pair.
    #[default]
    Micro,
    /// Mean of per-label AP over labels with at least one positive.
    Macro,
}

fn matrix_entries<T: Element>(scores: &Tensor<T>, labels: &Tensor<T>) -> Result<(usize, usize)> {
    if scores.rank() != 2 || scores.shape() != labels.shape() {
        return Err(Error::shape("mean_average_precision", format!("scores {:?} vs labels {:?}", scores.shape(), labels.shape())));
    }
    if let Some(&bad) = labels.data().iter().find(|&&y| y != T::zero() && y != T::one()) {
        return Err(Error::NonBinaryTarget(bad.to_f64_lossy()));
    }
    Ok((scores.shape()[0], scores.shape()[1]))
}

/// Flattens a `(B, K)` score matrix and its labels into one prediction set.
pub fn flatten_predictions<T: Element>(scores: &Tensor<T>, labels: &Tensor<T>) -> Result<PredictionSet> {
    let (_, k) = matrix_entries(scores, labels)?;
    let provenance = (0..scores.numel()).map(|i| (i / k, i % k)).collect();
    PredictionSet::new(scores.to_f64_vec(), labels.data().iter().map(|&y| y == T::one()).collect())?
        .with_provenance(provenance)
}

/// AP of every label column; `None` where the column has no positives.
pub fn per_label_average_precision<T: Element>(
    scores: &Tensor<T>,
    labels: &Tensor<T>,
    grid: &ThresholdGrid,
) -> Result<Vec<Option<f64>>> {
    let (b, k) = matrix_entries(scores, labels)?;
    let (s, y) = (scores.to_f64_vec(), labels.data());
    (0..k)
        .into_par_iter()
        .map(|j| {
            let col = PredictionSet::new((0..b).map(|i| s[i * k + j]).collect(), (0..b).map(|i| y[i * k + j] == T::one()).collect())?;
            match average_precision(&col, grid) {
                Ok(ap) => Ok(Some(ap)),
                Err(Error::NoPositives) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub fn mean_average_precision<T: Element>(
    scores: &Tensor<T>,
    labels: &Tensor<T>,
    grid: &ThresholdGrid,
    mode: Averaging,
) -> Result<f64> {
    match mode {
        Averaging::Micro => average_precision(&flatten_predictions(scores, labels)?, grid),
        Averaging::Macro => {
            let aps: Vec<f64> = per_label_average_precision(scores, labels, grid)?.into_iter().flatten().collect();
            if aps.is_empty() {
                return Err(Error::NoPositives);
            }
            Ok(aps.iter().sum::<f64>() / aps.len() as f64)
        }
    }
}
