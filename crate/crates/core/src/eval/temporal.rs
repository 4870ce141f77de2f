//! Train on one year, test on a later one, and summarize accuracy by the gap
//! between the two.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::compute_metrics;
use super::stats::{welch_ttest, TTestResult};
use super::{mean_std, predict_labels, Record, Trainer};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalExperiment {
    pub train_year: i32,
    pub test_year: i32,
    pub gap: u32,
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub gap: u32,
    pub mean_accuracy: f64,
    /// Sample std over experiments divided by √n; 0 for a single experiment.
    pub stderr: f64,
    pub n_experiments: usize,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    pub experiments: Vec<TemporalExperiment>,
    /// Gaps with at least one valid experiment, ascending.
    pub gaps: Vec<GapSummary>,
    /// Requested gaps with no valid year pair.
    pub missing_gaps: Vec<u32>,
    /// Mean accuracy at the largest present gap minus that at the smallest.
    pub delta: Option<f64>,
    /// Welch's test between the accuracies of those two gaps, when defined.
    pub ttest: Option<TTestResult>,
}

impl TemporalReport {
    pub fn gap(&self, gap: u32) -> Option<&GapSummary> {
        self.gaps.iter().find(|g| g.gap == gap)
    }
}

/// Seeded per-class downsampling to the smaller class size.
fn balance<'a, T>(mut recs: Vec<&'a Record<T>>, seed_value: u64, tag: &str, parts: &[u64]) -> Vec<&'a Record<T>> {
    recs.sort_by(|a, b| a.id.cmp(&b.id));
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = recs.into_iter().partition(|r| r.label);
    let m = pos.len().min(neg.len());
    let mut rng = seed::rng(seed_value, tag, parts);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    pos.truncate(m);
    neg.truncate(m);
    let mut out: Vec<_> = pos.into_iter().chain(neg).collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

pub fn temporal_harness<T: Sync>(
    records: &[Record<T>],
    trainer: &dyn Trainer<T>,
    gaps: &[u32],
    seed_value: u64,
) -> Result<TemporalReport> {
    if gaps.is_empty() || gaps.contains(&0) {
        return Err(Error::Config(format!("temporal gaps must be positive, got {gaps:?}")));
    }
    let mut by_year: BTreeMap<i32, Vec<&Record<T>>> = BTreeMap::new();
    for r in records {
        by_year.entry(r.year).or_default().push(r);
    }
    // a year is usable only with both classes present
    by_year.retain(|_, v| v.iter().any(|r| r.label) && v.iter().any(|r| !r.label));

    let gap_set: BTreeSet<u32> = gaps.iter().copied().collect();
    let mut pairs = Vec::new();
    for &gap in &gap_set {
        for &y in by_year.keys() {
            if by_year.contains_key(&(y + gap as i32)) {
                pairs.push((gap, y, y + gap as i32));
            }
        }
    }

    let experiments = pairs
        .par_iter()
        .map(|&(gap, ty, sy)| {
            let parts = [u64::from(gap), ty as u64 & 0xffff_ffff];
            let train = balance(by_year[&ty].clone(), seed_value, "temporal-train", &parts);
            let test = balance(by_year[&sy].clone(), seed_value, "temporal-test", &parts);
            let train_ids: BTreeSet<&str> = train.iter().map(|r| r.id.as_str()).collect();
            if let Some(r) = test.iter().find(|r| train_ids.contains(r.id.as_str())) {
                return Err(Error::Invalid(format!(
                    "user {} appears in both {ty} and {sy}; temporal splits must be user-disjoint",
                    r.id
                )));
            }
            let scores = trainer.fit_predict(&train, &test, seed::derive_tagged(seed_value, "temporal-fit", &parts))?;
            let truth: Vec<bool> = test.iter().map(|r| r.label).collect();
            let m = compute_metrics(&truth, &predict_labels(&scores))?;
            Ok(TemporalExperiment {
                train_year: ty,
                test_year: sy,
                gap,
                accuracy: m.accuracy,
                n_train: train.len(),
                n_test: test.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grouped: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for e in &experiments {
        grouped.entry(e.gap).or_default().push(e.accuracy);
    }
    let summaries: Vec<GapSummary> = grouped
        .into_iter()
        .map(|(gap, accuracies)| {
            let (mean, std) = mean_std(&accuracies);
            GapSummary {
                gap,
                mean_accuracy: mean,
                stderr: std / (accuracies.len() as f64).sqrt(),
                n_experiments: accuracies.len(),
                accuracies,
            }
        })
        .collect();
    let missing_gaps = gap_set
        .iter()
        .copied()
        .filter(|g| !summaries.iter().any(|s| s.gap == *g))
        .collect();
    let (delta, ttest) = match (summaries.first(), summaries.last()) {
        (Some(first), Some(last)) if first.gap != last.gap => (
            Some(last.mean_accuracy - first.mean_accuracy),
            welch_ttest(&last.accuracies, &first.accuracies).ok(),
        ),
        _ => (None, None),
    };
    Ok(TemporalReport {
        experiments,
        gaps: summaries,
        missing_gaps,
        delta,
        ttest,
    })
}
