//! Emotion-state sequences and their transition probability matrices.
//!
//! State encoding: for a clamped window vector (anger, fear, joy, sadness)
//! the state index is `8·anger + 4·fear + 2·joy + sadness`, so 0 is a window
//! with posts but no emotion ("N") and 15 is all four. Index 16 is a window
//! without posts ("no-act"). Flattened fingerprints are row-major: feature
//! `17·from + to`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::emotion::{Emotion, EmotionVector};
use crate::error::{Error, Result};
use crate::io;

pub const N_STATES: usize = 17;
pub const N_FEATURES: usize = N_STATES * N_STATES;

pub type Matrix17 = [[f64; N_STATES]; N_STATES];
pub type Counts17 = [[u32; N_STATES]; N_STATES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EmotionState(u8);

const LETTERS: [(Emotion, char); 4] = [
    (Emotion::Anger, 'A'),
    (Emotion::Fear, 'F'),
    (Emotion::Joy, 'J'),
    (Emotion::Sadness, 'S'),
];

impl EmotionState {
    pub const NO_ACT: EmotionState = EmotionState(16);

    pub fn new(index: usize) -> Option<Self> {
        (index < N_STATES).then_some(Self(index as u8))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn is_active(self) -> bool {
        self != Self::NO_ACT
    }

    /// Encodes the clamped vector.
    pub fn encode(v: &EmotionVector) -> Self {
        let c = v.clamped().0;
        Self((8 * c[0] + 4 * c[1] + 2 * c[2] + c[3]) as u8)
    }

    /// Binary vector of an active state; `None` for no-act.
    pub fn decode(self) -> Option<EmotionVector> {
        self.is_active().then(|| {
            let i = u32::from(self.0);
            EmotionVector::new((i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1)
        })
    }

    /// Display label: letters of the active emotions in A, F, J, S order,
    /// "N" for no emotion and "no-act" for inactivity.
    pub fn label(self) -> String {
        match self.decode() {
            None => "no-act".to_string(),
            Some(v) => {
                let s: String = LETTERS
                    .iter()
                    .filter(|(e, _)| v.get(*e) == 1)
                    .map(|(_, c)| *c)
                    .collect();
                if s.is_empty() {
                    "N".to_string()
                } else {
                    s
                }
            }
        }
    }

    pub fn all() -> impl Iterator<Item = EmotionState> {
        (0..N_STATES as u8).map(EmotionState)
    }
}

impl fmt::Display for EmotionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub fn state_labels() -> Vec<String> {
    EmotionState::all().map(EmotionState::label).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub window_seconds: i64,
    pub step_seconds: i64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_seconds: 1800,
            step_seconds: 1800,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_seconds <= 0 || self.step_seconds <= 0 {
            return Err(Error::Config(format!(
                "window ({}) and step ({}) must be positive",
                self.window_seconds, self.step_seconds
            )));
        }
        if self.step_seconds > self.window_seconds {
            return Err(Error::Config(format!(
                "step ({}) larger than window ({}) would skip posts",
                self.step_seconds, self.window_seconds
            )));
        }
        Ok(())
    }
}

/// Tiles `[t0, t_last]` with windows anchored at the first post and returns
/// one state per window, ending at the last window that starts at or before
/// the last post. Window `w` covers `[t0 + w·step, t0 + w·step + window)`.
pub fn window_states(
    events: &[(i64, EmotionVector)],
    config: &WindowConfig,
) -> Result<Vec<EmotionState>> {
    config.validate()?;
    let Some(&(t0, _)) = events.first() else {
        return Ok(Vec::new());
    };
    if events.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::Invalid("posts are not sorted by time".into()));
    }
    let step = config.step_seconds;
    let window = config.window_seconds;
    let last = events.last().expect("non-empty").0;
    let n_windows = usize::try_from((last - t0) / step + 1)
        .map_err(|_| Error::Invalid("timeline too long to window".into()))?;

    let mut sums = vec![EmotionVector::ZERO; n_windows];
    let mut active = vec![false; n_windows];
    for &(t, v) in events {
        let d = t - t0;
        let hi = d / step;
        // smallest w with w·step + window > d
        let lo = ((d - window).div_euclid(step) + 1).max(0);
        for w in lo..=hi {
            let w = w as usize;
            sums[w] += v;
            active[w] = true;
        }
    }
    Ok(sums
        .iter()
        .zip(&active)
        .map(|(v, &on)| {
            if on {
                EmotionState::encode(v)
            } else {
                EmotionState::NO_ACT
            }
        })
        .collect())
}

/// A user's transition counts and row-normalized probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub matrix: Matrix17,
    pub counts: Counts17,
    pub n_windows: usize,
}

/// First-order transition estimate. Rows never left stay all-zero.
pub fn transition_matrix(states: &[EmotionState]) -> Fingerprint {
    let mut counts: Counts17 = [[0; N_STATES]; N_STATES];
    for pair in states.windows(2) {
        counts[pair[0].index()][pair[1].index()] += 1;
    }
    let mut matrix: Matrix17 = [[0.0; N_STATES]; N_STATES];
    for (row, crow) in matrix.iter_mut().zip(&counts) {
        let total: u32 = crow.iter().sum();
        if total > 0 {
            for (p, &c) in row.iter_mut().zip(crow) {
                *p = f64::from(c) / f64::from(total);
            }
        }
    }
    Fingerprint {
        matrix,
        counts,
        n_windows: states.len(),
    }
}

impl Fingerprint {
    /// Row-major 289-dimensional feature vector.
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.matrix)
    }

    pub fn total_transitions(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| u64::from(c)).sum()
    }
}

pub fn flatten(matrix: &Matrix17) -> Vec<f64> {
    matrix.iter().flatten().copied().collect()
}

pub fn unflatten(features: &[f64]) -> Result<Matrix17> {
    if features.len() != N_FEATURES {
        return Err(Error::Dimension {
            expected: N_FEATURES,
            actual: features.len(),
        });
    }
    let mut m: Matrix17 = [[0.0; N_STATES]; N_STATES];
    for (i, &v) in features.iter().enumerate() {
        m[i / N_STATES][i % N_STATES] = v;
    }
    Ok(m)
}

/// Element-wise mean of user matrices (unvisited rows count as zeros).
pub fn cohort_mean_matrix<'a, I>(matrices: I) -> Result<Matrix17>
where
    I: IntoIterator<Item = &'a Matrix17>,
{
    let mut sum: Matrix17 = [[0.0; N_STATES]; N_STATES];
    let mut n = 0usize;
    for m in matrices {
        for (srow, row) in sum.iter_mut().zip(m) {
            for (s, v) in srow.iter_mut().zip(row) {
                *s += v;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Invalid("cannot average an empty cohort".into()));
    }
    for v in sum.iter_mut().flatten() {
        *v /= n as f64;
    }
    Ok(sum)
}

/// Removes the "to no-act" column for display. Rows keep their values and
/// are not renormalized.
pub fn drop_noact_column(matrix: &Matrix17) -> Vec<Vec<f64>> {
    matrix
        .iter()
        .map(|row| row[..N_STATES - 1].to_vec())
        .collect()
}

pub fn matrix_to_rows(matrix: &Matrix17) -> Vec<Vec<f64>> {
    matrix.iter().map(|r| r.to_vec()).collect()
}

/// One row of the fingerprint store.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintRecord {
    pub user_id: String,
    pub label: Label,
    pub year_bucket: i32,
    pub features: Vec<f64>,
}

/// Sidecar describing how a fingerprint store was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub n_states: usize,
    pub emotion_order: Vec<String>,
    pub state_encoding: String,
    pub state_labels: Vec<String>,
    pub flatten_order: String,
    pub window: WindowConfig,
}

impl StoreMeta {
    pub fn new(window: WindowConfig) -> Self {
        Self {
            n_states: N_STATES,
            emotion_order: Emotion::ALL.iter().map(|e| e.to_string()).collect(),
            state_encoding: "index = 8*anger + 4*fear + 2*joy + sadness; 16 = no-act".into(),
            state_labels: state_labels(),
            flatten_order: "row-major: feature 17*from + to".into(),
            window,
        }
    }
}

pub const STORE_FILE: &str = "fingerprints.csv";
pub const STORE_META_FILE: &str = "fingerprints.meta.json";

/// Writes `user_id,label,year_bucket,f0..f288`. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_store(path: &Path, records: &[FingerprintRecord]) -> Result<()> {
    let w = io::create(path)?;
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["user_id".to_string(), "label".into(), "year_bucket".into()];
    header.extend((0..N_FEATURES).map(|i| format!("f{i}")));
    let csv_err = |e: csv::Error| Error::parse(path.display().to_string(), e);
    wtr.write_record(&header).map_err(csv_err)?;
    for r in records {
        if r.features.len() != N_FEATURES {
            return Err(Error::Dimension {
                expected: N_FEATURES,
                actual: r.features.len(),
            });
        }
        let mut row = vec![r.user_id.clone(), r.label.to_string(), r.year_bucket.to_string()];
        row.extend(r.features.iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_store(path: &Path) -> Result<Vec<FingerprintRecord>> {
    let mut rdr = csv::Reader::from_reader(io::open(path)?);
    let ctx = path.display().to_string();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(&ctx, e))?;
        if rec.len() != 3 + N_FEATURES {
            return Err(Error::Dimension {
                expected: 3 + N_FEATURES,
                actual: rec.len(),
            });
        }
        let features = rec
            .iter()
            .skip(3)
            .map(|s| s.parse::<f64>().map_err(|e| Error::parse(&ctx, e)))
            .collect::<Result<Vec<_>>>()?;
        out.push(FingerprintRecord {
            user_id: rec[0].to_string(),
            label: rec[1].parse()?,
            year_bucket: rec[2].parse().map_err(|e| Error::parse(&ctx, e))?,
            features,
        });
    }
    Ok(out)
}

/// Per-class mean matrices of a fingerprint store.
pub fn class_means(records: &[FingerprintRecord]) -> Result<BTreeMap<Label, Matrix17>> {
    let mut grouped: BTreeMap<Label, Vec<Matrix17>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.label).or_default().push(unflatten(&r.features)?);
    }
    grouped
        .into_iter()
        .map(|(l, ms)| Ok((l, cohort_mean_matrix(&ms)?)))
        .collect()
}
