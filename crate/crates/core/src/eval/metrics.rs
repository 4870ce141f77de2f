use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Support-weighted averages over the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// [negatives, positives] in the ground truth.
    pub support: [usize; 2],
}

pub fn compute_metrics(y_true: &[bool], y_pred: &[bool]) -> Result<MetricsReport> {
    if y_true.is_empty() {
        return Err(Error::Invalid("cannot score an empty prediction set".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    let n = y_true.len() as f64;
    let correct = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    let mut support = [0usize; 2];
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    for class in [false, true] {
        let tp = y_true.iter().zip(y_pred).filter(|&(&t, &p)| t == class && p == class).count() as f64;
        let actual = y_true.iter().filter(|&&t| t == class).count();
        let predicted = y_pred.iter().filter(|&&p| p == class).count() as f64;
        support[usize::from(class)] = actual;
        let p = if predicted > 0.0 {
            tp / predicted
        } else {
            if actual > 0 {
                log::warn!("no predictions for class {}; its precision is set to 0", u8::from(class));
            }
            0.0
        };
        let r = if actual > 0 { tp / actual as f64 } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let w = actual as f64 / n;
        precision += w * p;
        recall += w * r;
        f1 += w * f;
    }
    Ok(MetricsReport {
        accuracy: correct as f64 / n,
        f1,
        precision,
        recall,
        support,
    })
}

/// False positive rate at the highest threshold that still flags every
/// positive: τ = min positive score, scores ≥ τ count as positive.
pub fn fpr_at_full_tpr(y_true: &[bool], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::Dimension {
            expected: y_true.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Invalid("scores contain NaN".into()));
    }
    let tau = y_true
        .iter()
        .zip(scores)
        .filter(|(&y, _)| y)
        .map(|(_, &s)| s)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Invalid("FPR at full recall needs at least one positive".into()))?;
    let negatives: Vec<f64> = y_true.iter().zip(scores).filter(|(&y, _)| !y).map(|(_, &s)| s).collect();
    if negatives.is_empty() {
        return Err(Error::Invalid("FPR at full recall needs at least one negative".into()));
    }
    let fp = negatives.iter().filter(|&&s| s >= tau).count();
    Ok(fp as f64 / negatives.len() as f64)
}
