//! Classification metrics.

use crate::error::{Error, Result};

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / pred.len() as f64
}

/// Unweighted mean of per-class F1 scores.
///
/// A class absent from the truth that was also never predicted is excluded
/// from the average; a class that appears on either side contributes its
/// F1 (zero when there are no true positives).
pub fn macro_f1(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Contract("prediction/truth length mismatch".into()));
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&l| l >= n_classes) {
        return Err(Error::Contract(format!("label {bad} out of range for {n_classes} classes")));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    for c in 0..n_classes {
        if tp[c] + fp[c] + fn_[c] == 0 {
            continue;
        }
        let f1 = if tp[c] == 0 {
            0.0
        } else {
            2.0 * tp[c] as f64 / (2.0 * tp[c] as f64 + fp[c] as f64 + fn_[c] as f64)
        };
        sum += f1;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Degenerate("no class present in prediction or truth".into()));
    }
    Ok(sum / counted as f64)
}

/// Inverse-frequency class weights, normalized to mean 1. Classes absent
/// from the labels get weight 0.
pub fn inverse_frequency_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count().max(1);
    let total = labels.len() as f64;
    let raw: Vec<f64> =
        counts.iter().map(|&c| if c > 0 { total / c as f64 } else { 0.0 }).collect();
    let mean = raw.iter().sum::<f64>() / present as f64;
    raw.iter().map(|w| w / mean).collect()
}
