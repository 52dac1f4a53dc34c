//! Independent reference implementations shared by the integration tests.
//!
//! Written directly from the definitions, without reusing library code paths.

#![allow(dead_code)]

/// Thresholded AP by scanning every score at every one of `count` thresholds.
pub fn brute_force_ap(scores: &[f64], labels: &[bool], count: usize) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in (0..count).rev() {
        let t = i as f64 / (count - 1) as f64;
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= t {
                if l {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if positives == 0 { 0.0 } else { tp as f64 / positives as f64 };
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Exact rank-based AP: mean over positives of precision at their rank.
/// Assumes distinct scores.
pub fn rank_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut hits = 0;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / hits as f64
}

/// Plain binary cross-entropy summed over labels, mean over samples.
pub fn bce_oracle(logits: &[f64], targets: &[f64], batch: usize) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&z, &y)| {
            let p = 1.0 / (1.0 + (-z).exp());
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / batch as f64
}
