//! Evaluation metrics.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("AUROC needs both classes, got {positives} positives and {negatives} negatives")]
    OneClassOnly { positives: usize, negatives: usize },
    #[error("R² needs a target with non-zero variance")]
    ZeroVarianceTarget,
    #[error("length mismatch: {0} scores, {1} targets")]
    LengthMismatch(usize, usize),
    #[error("metric of an empty set")]
    Empty,
}

/// Area under the ROC curve of `scores` for `labels` (1 positive, 0 negative).
///
/// Computed as the Mann-Whitney statistic from average ranks, which equals
/// `(concordant pairs + ties / 2) / (positives * negatives)`.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l != 0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::OneClassOnly { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum of the positives keeps tied (half-integer) ranks exact.
    let mut twice_rank_sum = 0u128;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their average (i + j + 2) / 2.
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] != 0).count() as u128;
        twice_rank_sum += tied_pos * (i + j + 2) as u128;
        i = j + 1;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * positives as f64 * negatives as f64))
}

/// Which value of the binarized IoU counts as the positive class for F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum PositiveClass {
    /// False-positive segments (`IoU_0 = 0`) are the positives.
    #[default]
    #[serde(rename = "iou0_is_0")]
    #[value(name = "iou0_is_0")]
    Iou0IsZero,
    #[serde(rename = "iou0_is_1")]
    #[value(name = "iou0_is_1")]
    Iou0IsOne,
}

/// F1 of the positive class; a score `>= threshold` predicts `IoU_0 = 1`.
/// Returns 0 when precision and recall are both 0.
pub fn f1(scores: &[f64], labels: &[u8], threshold: f64, positive: PositiveClass) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    let target = match positive {
        PositiveClass::Iou0IsZero => 0u8,
        PositiveClass::Iou0IsOne => 1u8,
    };
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = u8::from(s >= threshold);
        let actual = u8::from(l != 0);
        match (predicted == target, actual == target) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2(pred: &[f64], target: &[f64]) -> Result<f64, MetricError> {
    if pred.len() != target.len() {
        return Err(MetricError::LengthMismatch(pred.len(), target.len()));
    }
    if target.len() < 2 {
        return Err(MetricError::ZeroVarianceTarget);
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot <= 0.0 {
        return Err(MetricError::ZeroVarianceTarget);
    }
    let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt() })
    }
}
