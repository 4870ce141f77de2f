//! Splits, metrics, cross-validation, screening operating point, Welch's
//! t-test and the temporal-gap harness.

pub mod metrics;
pub mod splits;
pub mod stats;
pub mod temporal;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use metrics::{compute_metrics, fpr_at_full_tpr, MetricsReport};
pub use splits::{cross_validate, make_splits, stratified_folds, CvReport, Split, SplitPlan};
pub use stats::{welch_ttest, TTestResult};
pub use temporal::{temporal_harness, GapSummary, TemporalReport};

/// One user in a binary task: `label` is true for the disorder class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record<T> {
    pub id: String,
    pub label: bool,
    pub year: i32,
    pub data: T,
}

/// Fits on one set of records and returns positive-class probabilities for
/// another. Must be deterministic for a fixed seed.
pub trait Trainer<T>: Sync {
    fn fit_predict(&self, train: &[&Record<T>], test: &[&Record<T>], seed: u64) -> Result<Vec<f64>>;
}

impl<T, F> Trainer<T> for F
where
    F: Fn(&[&Record<T>], &[&Record<T>], u64) -> Result<Vec<f64>> + Sync,
{
    fn fit_predict(&self, train: &[&Record<T>], test: &[&Record<T>], seed: u64) -> Result<Vec<f64>> {
        self(train, test, seed)
    }
}

/// Threshold used to turn probabilities into class predictions.
pub const DECISION_THRESHOLD: f64 = 0.5;

pub fn predict_labels(scores: &[f64]) -> Vec<bool> {
    scores.iter().map(|&p| p >= DECISION_THRESHOLD).collect()
}

/// Sample mean and (n − 1) standard deviation; std is 0 for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
