//! Precision–recall evaluation with anomalies as the positive class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One point per distinct score, threshold descending. A synthetic first
/// point (threshold above every score, precision 1 by convention, recall 0)
/// makes the recall range span [0, 1].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Sweeps a threshold over every distinct score (descending); samples with
/// equal scores flip together. A sample is predicted anomalous when its score
/// is `>=` the threshold.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<PrCurve> {
    if scores.len() != labels.len() {
        return Err(Error::contract(format!(
            "pr_curve: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { op: "pr_curve" });
    }
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    let total_neg = labels.len() - total_pos;
    if total_pos == 0 {
        return Err(Error::contract(
            "pr_curve: no positive (anomalous) samples in labels",
        ));
    }
    if total_neg == 0 {
        return Err(Error::contract(
            "pr_curve: no negative (normal) samples in labels",
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Descending by score; index tiebreak keeps the sort fully deterministic.
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });

    let mut points = vec![PrPoint {
        threshold: f64::INFINITY,
        precision: 1.0,
        recall: 0.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // consume the whole tie group
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / total_pos as f64,
        });
    }
    Ok(PrCurve { points })
}

/// Area under the PR curve by average-precision summation:
/// `Σ (recallₖ − recallₖ₋₁) · precisionₖ` over descending thresholds.
pub fn auprc(curve: &PrCurve) -> f64 {
    let mut area = 0.0;
    for w in curve.points.windows(2) {
        area += (w[1].recall - w[0].recall) * w[1].precision;
    }
    area
}

/// Convenience: PR curve then area.
pub fn auprc_of(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(auprc(&pr_curve(scores, labels)?))
}

/// How to pick the operating threshold for point metrics.
#[derive(Clone, Copy, Debug)]
pub enum ThresholdPolicy {
    /// Threshold at the q-th score quantile with `q = 1 − base_rate`, i.e.
    /// flag roughly `base_rate · n` of the scored samples.
    BaseRateQuantile { base_rate: f64 },
    Explicit(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMetrics {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 at a single operating point. Predicted anomalous means
/// score `>=` threshold; with equal scores, ties flip together exactly as in
/// [`pr_curve`].
pub fn prf_at_threshold(
    scores: &[f64],
    labels: &[u8],
    policy: ThresholdPolicy,
) -> Result<PointMetrics> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::contract("prf_at_threshold: bad input lengths"));
    }
    let threshold = match policy {
        ThresholdPolicy::Explicit(t) => t,
        ThresholdPolicy::BaseRateQuantile { base_rate } => {
            if !(0.0..=1.0).contains(&base_rate) {
                return Err(Error::contract(format!(
                    "base rate {base_rate} outside [0,1]"
                )));
            }
            let mut sorted = scores.to_vec();
            sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
            // number of samples to flag; at least one
            let k = ((base_rate * scores.len() as f64).round() as usize)
                .clamp(1, scores.len());
            sorted[k - 1]
        }
    };

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        match (predicted, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PointMetrics {
        threshold,
        precision,
        recall,
        f1,
    })
}
