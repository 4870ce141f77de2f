//! Stratified train/validation/test splits and k-fold cross-validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, fpr_at_full_tpr, MetricsReport};
use super::{mean_std, predict_labels, Record, Trainer};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub assignments: BTreeMap<String, Split>,
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl SplitPlan {
    pub fn members(&self, split: Split) -> impl Iterator<Item = &str> {
        self.assignments
            .iter()
            .filter(move |(_, s)| **s == split)
            .map(|(id, _)| id.as_str())
    }

    pub fn get(&self, user_id: &str) -> Option<Split> {
        self.assignments.get(user_id).copied()
    }
}

/// Per-split counts for a class of `n` users: floors of `n·fraction`, then
/// leftover users go one at a time to the largest fractional parts, ties
/// resolved in train, val, test order.
pub fn allocate(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let raw = fractions.map(|f| n as f64 * f);
    let mut counts = raw.map(|x| (x + 1e-9).floor() as usize);
    let mut rest: Vec<(usize, f64)> = raw
        .iter()
        .zip(&counts)
        .map(|(x, &c)| (x - c as f64).max(0.0))
        .enumerate()
        .collect();
    rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let assigned: usize = counts.iter().sum();
    for &(i, _) in rest.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn validate_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be in [0, 1] and sum to 1"
        )));
    }
    Ok(())
}

/// Stratified, seeded split of users into train/val/test.
pub fn make_splits(users: &[(String, Label)], fractions: [f64; 3], seed_value: u64) -> Result<SplitPlan> {
    validate_fractions(fractions)?;
    let mut by_class: BTreeMap<Label, Vec<&str>> = BTreeMap::new();
    for (id, label) in users {
        by_class.entry(*label).or_default().push(id);
    }
    let mut assignments = BTreeMap::new();
    for (label, mut ids) in by_class {
        ids.sort_unstable();
        let counts = allocate(ids.len(), fractions);
        for (k, (&c, &f)) in counts.iter().zip(&fractions).enumerate() {
            if f > 0.0 && c == 0 {
                return Err(Error::Invalid(format!(
                    "class {label} has {} users, too few for split {k} of {fractions:?}",
                    ids.len()
                )));
            }
        }
        let mut rng = seed::rng(seed_value, "splits", &[label.index() as u64]);
        ids.shuffle(&mut rng);
        let mut it = ids.into_iter();
        for (split, c) in [Split::Train, Split::Val, Split::Test].into_iter().zip(counts) {
            for id in it.by_ref().take(c) {
                if assignments.insert(id.to_string(), split).is_some() {
                    return Err(Error::Invalid(format!("duplicate user id {id}")));
                }
            }
        }
    }
    Ok(SplitPlan {
        assignments,
        fractions,
        seed: seed_value,
    })
}

/// Fold index for every record; each class is spread round-robin over the
/// folds after a seeded shuffle, continuing the rotation across classes.
pub fn stratified_folds(ids: &[&str], labels: &[bool], k: usize, seed_value: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs k >= 2, got {k}")));
    }
    let mut folds = vec![0; labels.len()];
    let mut cursor = 0;
    for class in [false, true] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::Invalid(format!(
                "class {} has {} records, fewer than {k} folds; some fold would hold one class",
                u8::from(class),
                members.len()
            )));
        }
        members.sort_by(|&a, &b| ids[a].cmp(ids[b]));
        let mut rng = seed::rng(seed_value, "folds", &[u64::from(class)]);
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = cursor % k;
            cursor += 1;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub fpr_full_tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub folds: Vec<MetricsReport>,
    pub fold_fpr_full_tpr: Vec<f64>,
    pub mean: MetricSummary,
    /// Sample standard deviation across folds.
    pub std: MetricSummary,
}

impl CvReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|m| m.accuracy).collect()
    }
}

pub fn cross_validate<T: Sync>(
    records: &[Record<T>],
    k: usize,
    trainer: &dyn Trainer<T>,
    seed_value: u64,
) -> Result<CvReport> {
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let labels: Vec<bool> = records.iter().map(|r| r.label).collect();
    let folds = stratified_folds(&ids, &labels, k, seed_value)?;
    let results = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<&Record<T>> = records.iter().zip(&folds).filter(|(_, &g)| g != f).map(|(r, _)| r).collect();
            let test: Vec<&Record<T>> = records.iter().zip(&folds).filter(|(_, &g)| g == f).map(|(r, _)| r).collect();
            let scores = trainer.fit_predict(&train, &test, seed::derive_tagged(seed_value, "cv-fold", &[f as u64]))?;
            let truth: Vec<bool> = test.iter().map(|r| r.label).collect();
            let m = compute_metrics(&truth, &predict_labels(&scores))?;
            Ok((m, fpr_at_full_tpr(&truth, &scores)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (fold_metrics, fprs): (Vec<MetricsReport>, Vec<f64>) = results.into_iter().unzip();
    let col = |f: fn(&MetricsReport) -> f64| mean_std(&fold_metrics.iter().map(f).collect::<Vec<_>>());
    let (acc, f1, prec, rec, fpr) = (
        col(|m| m.accuracy),
        col(|m| m.f1),
        col(|m| m.precision),
        col(|m| m.recall),
        mean_std(&fprs),
    );
    Ok(CvReport {
        k,
        folds: fold_metrics,
        fold_fpr_full_tpr: fprs,
        mean: MetricSummary {
            accuracy: acc.0,
            f1: f1.0,
            precision: prec.0,
            recall: rec.0,
            fpr_full_tpr: fpr.0,
        },
        std: MetricSummary {
            accuracy: acc.1,
            f1: f1.1,
            precision: prec.1,
            recall: rec.1,
            fpr_full_tpr: fpr.1,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn users(per_class: usize) -> Vec<(String, Label)> {
        Label::ALL
            .iter()
            .flat_map(|&l| (0..per_class).map(move |i| (format!("{l}{i:03}"), l)))
            .collect()
    }

    fn counts(plan: &SplitPlan, label: Label) -> [usize; 3] {
        let mut c = [0; 3];
        for (id, s) in &plan.assignments {
            if id.starts_with(label.as_str()) && id[label.as_str().len()..].chars().all(|c| c.is_ascii_digit()) {
                c[*s as usize] += 1;
            }
        }
        c
    }

    #[test]
    fn seventy_fifteen_fifteen() {
        let plan = make_splits(&users(100), [0.7, 0.15, 0.15], 1).unwrap();
        for l in Label::ALL {
            assert_eq!(counts(&plan, l), [70, 15, 15]);
        }
        assert_eq!(plan.assignments.len(), 400);
    }

    #[test]
    fn all_train() {
        let plan = make_splits(&users(10), [1.0, 0.0, 0.0], 1).unwrap();
        assert!(plan.assignments.values().all(|&s| s == Split::Train));
    }

    #[test]
    fn remainder_rule_on_ten() {
        // raw 7 / 1.5 / 1.5: the spare user goes to val (tie resolved in order)
        assert_eq!(allocate(10, [0.7, 0.15, 0.15]), [7, 2, 1]);
        let plan = make_splits(&users(10), [0.7, 0.15, 0.15], 3).unwrap();
        assert_eq!(counts(&plan, Label::Ad), [7, 2, 1]);
    }

    #[test]
    fn too_small_class() {
        assert!(make_splits(&users(3), [0.7, 0.15, 0.15], 1).is_err());
        assert!(make_splits(&users(3), [0.7, 0.2, 0.2], 1).is_err());
    }

    #[test]
    fn splits_deterministic_and_seed_sensitive() {
        let a = make_splits(&users(20), [0.7, 0.15, 0.15], 5).unwrap();
        let b = make_splits(&users(20), [0.7, 0.15, 0.15], 5).unwrap();
        let c = make_splits(&users(20), [0.7, 0.15, 0.15], 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn folds_partition_and_stratify() {
        let ids: Vec<String> = (0..23).map(|i| format!("u{i}")).collect();
        let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let labels: Vec<bool> = (0..23).map(|i| i % 3 == 0).collect();
        let folds = stratified_folds(&id_refs, &labels, 5, 2).unwrap();
        for f in 0..5 {
            let members: Vec<usize> = (0..23).filter(|&i| folds[i] == f).collect();
            assert!(members.iter().any(|&i| labels[i]));
            assert!(members.iter().any(|&i| !labels[i]));
        }
        assert!(stratified_folds(&id_refs, &labels, 1, 2).is_err());
        assert!(stratified_folds(&id_refs, &labels, 9, 2).is_err());
    }

    fn records(n: usize, separable: bool) -> Vec<Record<f64>> {
        (0..n)
            .map(|i| Record {
                id: format!("r{i:03}"),
                label: i % 2 == 0,
                year: 2015,
                data: if separable { (i % 2) as f64 } else { i as f64 },
            })
            .collect()
    }

    #[test]
    fn separable_cv_is_perfect() {
        let trainer = |_: &[&Record<f64>], test: &[&Record<f64>], _: u64| -> Result<Vec<f64>> {
            Ok(test.iter().map(|r| 1.0 - r.data).collect())
        };
        let rep = cross_validate(&records(20, true), 5, &trainer, 1).unwrap();
        assert_eq!(rep.mean.accuracy, 1.0);
        assert_eq!(rep.std.accuracy, 0.0);
        assert_eq!(rep.folds.len(), 5);
    }

    #[test]
    fn leave_one_out_matches_enumeration() {
        // nearest-neighbour on a 1-d fixture, scored by hand
        let data = [0.0, 1.0, 2.0, 10.0, 11.0, 12.0];
        let recs: Vec<Record<f64>> = data
            .iter()
            .enumerate()
            .map(|(i, &x)| Record {
                id: format!("r{i}"),
                label: [true, false, true, false, true, false][i],
                year: 0,
                data: x,
            })
            .collect();
        let nn = |train: &[&Record<f64>], test: &[&Record<f64>], _: u64| -> Result<Vec<f64>> {
            Ok(test
                .iter()
                .map(|t| {
                    let best = train
                        .iter()
                        .min_by(|a, b| (a.data - t.data).abs().total_cmp(&(b.data - t.data).abs()))
                        .unwrap();
                    if best.label { 1.0 } else { 0.0 }
                })
                .collect())
        };
        // leave-one-out needs k = n, which stratification forbids for 3+3 with k=6;
        // k = 3 puts one positive and one negative in each fold instead.
        let rep = cross_validate(&recs, 3, &nn, 0).unwrap();
        let folds = stratified_folds(
            &recs.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
            &recs.iter().map(|r| r.label).collect::<Vec<_>>(),
            3,
            0,
        )
        .unwrap();
        let mut expected = Vec::new();
        for f in 0..3 {
            let mut correct = 0;
            let mut n = 0;
            for i in 0..6 {
                if folds[i] != f {
                    continue;
                }
                n += 1;
                let nearest = (0..6)
                    .filter(|&j| folds[j] != f)
                    .min_by(|&a, &b| (data[a] - data[i]).abs().total_cmp(&(data[b] - data[i]).abs()))
                    .unwrap();
                correct += usize::from(recs[nearest].label == recs[i].label);
            }
            expected.push(correct as f64 / n as f64);
        }
        assert_eq!(rep.accuracies(), expected);
        let covered: BTreeSet<usize> = folds.iter().copied().collect();
        assert_eq!(covered.len(), 3);
    }
}
