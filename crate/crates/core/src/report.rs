//! Evaluation report: mAP, per-label AP, multiply-adds and parameter count.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::LabeledExample;
use crate::error::Result;
use crate::metrics::{mean_average_precision, per_label_average_precision, Averaging, ThresholdGrid};
use crate::tensor::Element;
use crate::train::predict_scores;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelAp {
    pub label: String,
    /// `None` when the label never occurs in the evaluated data.
    pub ap: Option<f64>,
    pub positives: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub rule: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Micro-averaged mAP over every (sample, label) pair.
    pub map: f64,
    pub per_label_ap: Vec<LabelAp>,
    /// Analytic multiply-adds per inference.
    pub flops: u64,
    pub params: usize,
    pub examples: usize,
    pub thresholds: GridInfo,
    pub config: serde_json::Value,
    /// RFC 3339; taken from `SOURCE_DATE_EPOCH` when set so reports can be
    /// reproduced byte for byte.
    pub created_at: String,
}

fn timestamp() -> String {
    let fixed = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse::<i64>().ok());
    let when = fixed.and_then(|s| chrono::DateTime::from_timestamp(s, 0)).unwrap_or_else(chrono::Utc::now);
    when.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Scores `examples` with the checkpoint's model and summarizes them.
pub fn evaluate<T: Element>(ckpt: &Checkpoint<T>, examples: &[LabeledExample], batch_size: usize) -> Result<EvalReport> {
    let grid = ThresholdGrid::default();
    let (scores, targets) = predict_scores(&ckpt.model, examples, batch_size)?;
    let map = mean_average_precision(&scores, &targets, &grid, Averaging::Micro)?;
    let per_label = per_label_average_precision(&scores, &targets, &grid)?;
    let per_label_ap = ckpt
        .meta
        .labels
        .iter()
        .zip(per_label)
        .enumerate()
        .map(|(k, (label, ap))| LabelAp {
            label: label.clone(),
            ap,
            positives: examples.iter().filter(|e| e.target[k]).count(),
        })
        .collect();
    Ok(EvalReport {
        map,
        per_label_ap,
        flops: ckpt.meta.model.multiply_adds(),
        params: ckpt.param_count(),
        examples: examples.len(),
        thresholds: GridInfo { count: grid.count(), min: 0.0, max: 1.0, rule: "score >= t".into() },
        config: ckpt.meta.config.clone(),
        created_at: timestamp(),
    })
}
