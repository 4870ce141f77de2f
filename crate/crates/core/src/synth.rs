//! Synthetic cohorts with known class transition matrices.
//!
//! Every user's state chain is drawn from their class matrix, then turned
//! into posts that the lexicon labeler maps back to exactly the same states:
//! one declarative post per active 30-minute window, holding one token per
//! emotion bit plus emotion-free filler. Optional per-(class, year) filler
//! vocabularies inject topic drift that only content features can see.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CohortSpec, Label, Post, UserTimeline};
use crate::emotion::{lexicon_label, Emotion, EmotionVector, Lexicon};
use crate::error::{Error, Result};
use crate::fingerprint::{EmotionState, Matrix17, N_STATES};
use crate::io;
use crate::report;
use crate::seed;

/// Spacing of synthetic posts; matches the default window and step.
pub const WINDOW_SECONDS: i64 = 1800;

const DEFAULT_MATRICES: [(Label, &str); 4] = [
    (Label::Control, include_str!("../data/synth/control.csv")),
    (Label::Bd, include_str!("../data/synth/bd.csv")),
    (Label::Mdd, include_str!("../data/synth/mdd.csv")),
    (Label::Ad, include_str!("../data/synth/ad.csv")),
];

const NEGATORS: [&str; 3] = ["not", "no", "never"];

/// Bundled illustrative matrix for a class.
pub fn default_matrix(label: Label) -> Matrix17 {
    let text = DEFAULT_MATRICES.iter().find(|(l, _)| *l == label).expect("all classes bundled").1;
    to_matrix(report::parse_heatmap_csv(text).expect("bundled matrix parses")).expect("bundled matrix is 17x17")
}

fn to_matrix(rows: Vec<Vec<f64>>) -> Result<Matrix17> {
    if rows.len() != N_STATES {
        return Err(Error::Dimension {
            expected: N_STATES,
            actual: rows.len(),
        });
    }
    let mut m = [[0.0; N_STATES]; N_STATES];
    for (dst, row) in m.iter_mut().zip(rows) {
        if row.len() != N_STATES {
            return Err(Error::Dimension {
                expected: N_STATES,
                actual: row.len(),
            });
        }
        dst.copy_from_slice(&row);
    }
    Ok(m)
}

/// A class matrix given inline as 17 rows, or as a heatmap-format CSV path
/// (relative paths resolve against the spec file's directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Rows(Vec<Vec<f64>>),
    Path(PathBuf),
}

impl MatrixSource {
    pub fn resolve(&self) -> Result<Matrix17> {
        match self {
            MatrixSource::Rows(rows) => to_matrix(rows.clone()),
            MatrixSource::Path(p) => to_matrix(report::parse_heatmap_csv(&io::read_to_string(p)?)?),
        }
    }
}

/// Filler vocabulary that replaces the default filler for one class and year.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftEntry {
    pub class: Label,
    pub year: i32,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub class_matrices: BTreeMap<Label, MatrixSource>,
    pub users_per_class: usize,
    /// Minimum chain length; a chain is extended until it ends on an active
    /// state, since windows stop at the last post.
    pub windows_per_user: usize,
    pub start_year: i32,
    pub end_year: i32,
    pub emotion_token_map: BTreeMap<Emotion, Vec<String>>,
    pub filler_tokens: Vec<String>,
    pub filler_per_post: usize,
    pub drift_tokens: Vec<DriftEntry>,
    pub subreddit: String,
    pub seed: u64,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        let class_matrices = Label::ALL
            .iter()
            .map(|&l| (l, MatrixSource::Rows(default_matrix(l).iter().map(|r| r.to_vec()).collect())))
            .collect();
        let emotion_token_map = BTreeMap::from([
            (Emotion::Anger, words(&["angry", "furious", "annoyed", "frustrated"])),
            (Emotion::Fear, words(&["afraid", "scared", "nervous", "worried"])),
            (Emotion::Joy, words(&["happy", "glad", "excited", "grateful"])),
            (Emotion::Sadness, words(&["sad", "lonely", "miserable", "heartbroken"])),
        ]);
        Self {
            class_matrices,
            users_per_class: 200,
            windows_per_user: 500,
            start_year: 2011,
            end_year: 2019,
            emotion_token_map,
            filler_tokens: words(&[
                "today", "coffee", "walked", "weekend", "garden", "music", "train", "window", "lunch", "street",
                "book", "city", "table", "phone", "weather", "dinner",
            ]),
            filler_per_post: 2,
            drift_tokens: Vec::new(),
            subreddit: "AskReddit".into(),
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    /// Reads a TOML or JSON spec; relative matrix paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: Self = io::read_config(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for src in spec.class_matrices.values_mut() {
            if let MatrixSource::Path(p) = src {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(spec)
    }

    pub fn years(&self) -> Vec<i32> {
        (self.start_year..=self.end_year).collect()
    }

    /// Replaces the drift table with a sliding vocabulary: class `c` in the
    /// `k`-th year uses topic tokens `k .. k + width`, so two years `g` apart
    /// share `width - g` tokens and none once `g >= width`.
    pub fn with_sliding_drift(mut self, width: usize) -> Self {
        let classes: Vec<Label> = self.class_matrices.keys().copied().collect();
        self.drift_tokens = classes
            .iter()
            .flat_map(|&class| {
                self.years().into_iter().enumerate().map(move |(k, year)| DriftEntry {
                    class,
                    year,
                    tokens: (k..k + width).map(|t| format!("{class}topic{t}")).collect(),
                })
            })
            .collect();
        self
    }

    /// Classes that differ only in how long states persist: every class
    /// matrix is [`persistence_matrix`] of the same `base`, so all classes
    /// share one stationary distribution and word frequencies carry no
    /// class signal. Only transition dynamics separate them.
    pub fn shared_marginal(mut self, base: &[f64; N_STATES], persistence: &[(Label, f64)]) -> Result<Self> {
        self.class_matrices = persistence
            .iter()
            .map(|&(l, rho)| {
                let m = persistence_matrix(base, rho)?;
                Ok((l, MatrixSource::Rows(m.iter().map(|r| r.to_vec()).collect())))
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn matrices(&self) -> Result<BTreeMap<Label, Matrix17>> {
        self.class_matrices
            .iter()
            .map(|(&l, src)| {
                let m = src.resolve()?;
                validate_matrix(&m).map_err(|e| Error::Config(format!("class {l}: {e}")))?;
                Ok((l, m))
            })
            .collect()
    }

    fn drift_for(&self, class: Label, year: i32) -> Option<&[String]> {
        self.drift_tokens
            .iter()
            .find(|d| d.class == class && d.year == year)
            .map(|d| d.tokens.as_slice())
    }

    /// Checks the spec against the lexicon that will label the posts: emotion
    /// tokens must flag exactly their emotion, filler must flag nothing.
    pub fn validate(&self, lexicon: &Lexicon) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.class_matrices.is_empty() {
            return bad("generator needs at least one class matrix".into());
        }
        if self.windows_per_user < 2 {
            return bad(format!("windows_per_user must be at least 2, got {}", self.windows_per_user));
        }
        if self.users_per_class == 0 {
            return bad("users_per_class must be at least 1".into());
        }
        if self.start_year > self.end_year {
            return bad(format!("start_year {} after end_year {}", self.start_year, self.end_year));
        }
        let usable = |t: &str| !t.is_empty() && t.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()) && !NEGATORS.contains(&t);
        for e in Emotion::ALL {
            let Some(tokens) = self.emotion_token_map.get(&e).filter(|t| !t.is_empty()) else {
                return bad(format!("emotion_token_map has no tokens for {e}"));
            };
            let mut expect = EmotionVector::ZERO;
            expect.set(e);
            for t in tokens {
                if !usable(t) || lexicon_label(t, lexicon) != expect {
                    return bad(format!("token `{t}` does not label as {e} alone"));
                }
            }
        }
        if self.filler_per_post == 0 {
            return bad("filler_per_post must be at least 1 so emotionless posts have text".into());
        }
        let fillers = std::iter::once(&self.filler_tokens).chain(self.drift_tokens.iter().map(|d| &d.tokens));
        for list in fillers {
            if list.is_empty() {
                return bad("filler token lists must not be empty".into());
            }
            for t in list {
                if !usable(t) || lexicon_label(t, lexicon) != EmotionVector::ZERO {
                    return bad(format!("filler token `{t}` is not emotion-free"));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for d in &self.drift_tokens {
            if !seen.insert((d.class, d.year)) {
                return bad(format!("duplicate drift entry for {} {}", d.class, d.year));
            }
        }
        self.matrices().map(|_| ())
    }
}

/// Rows must be non-negative and sum to 1 (± 1e-12) or be all zero, and no
/// state with outgoing mass may lead into an all-zero row.
pub fn validate_matrix(m: &Matrix17) -> Result<()> {
    let mut live = [false; N_STATES];
    for (i, row) in m.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!("row {i} has negative or non-finite entries")));
        }
        let s: f64 = row.iter().sum();
        if s != 0.0 && (s - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("row {i} sums to {s}")));
        }
        live[i] = s != 0.0;
    }
    if !live.iter().any(|&l| l) {
        return Err(Error::Config("matrix has no non-zero rows".into()));
    }
    for i in (0..N_STATES).filter(|&i| live[i]) {
        if let Some(j) = (0..N_STATES).find(|&j| m[i][j] > 0.0 && !live[j]) {
            return Err(Error::Config(format!(
                "state {} reaches state {}, whose row is all zero",
                EmotionState::new(i).unwrap().label(),
                EmotionState::new(j).unwrap().label()
            )));
        }
    }
    Ok(())
}

/// `(1 − rho)·base + rho` on the diagonal in every row; `base` is its
/// stationary distribution for any `rho` in [0, 1).
pub fn persistence_matrix(base: &[f64; N_STATES], rho: f64) -> Result<Matrix17> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("persistence {rho} outside [0, 1)")));
    }
    let total: f64 = base.iter().sum();
    if base.iter().any(|v| !v.is_finite() || *v < 0.0) || total <= 0.0 {
        return Err(Error::Config("base distribution must be non-negative with positive mass".into()));
    }
    let mut m = [[0.0; N_STATES]; N_STATES];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (1.0 - rho) * base[j] / total + if i == j { rho } else { 0.0 };
        }
        // absorb rounding so the row sums to one
        let s: f64 = row.iter().sum();
        row[i] += 1.0 - s;
    }
    Ok(m)
}

/// Power iteration from the uniform distribution over non-zero rows;
/// `None` when it does not settle (periodic chains).
pub fn stationary_distribution(m: &Matrix17) -> Option<[f64; N_STATES]> {
    let live: Vec<usize> = (0..N_STATES).filter(|&i| m[i].iter().sum::<f64>() > 0.0).collect();
    let mut p = [0.0; N_STATES];
    for &i in &live {
        p[i] = 1.0 / live.len() as f64;
    }
    for _ in 0..10_000 {
        let mut next = [0.0; N_STATES];
        for i in 0..N_STATES {
            if p[i] > 0.0 {
                for j in 0..N_STATES {
                    next[j] += p[i] * m[i][j];
                }
            }
        }
        let diff: f64 = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        p = next;
        if diff < 1e-13 {
            return Some(p);
        }
    }
    None
}

fn draw(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
            last = i;
        }
    }
    last
}

fn initial_weights(m: &Matrix17) -> [f64; N_STATES] {
    stationary_distribution(m).unwrap_or_else(|| {
        let mut w = [0.0; N_STATES];
        for (i, row) in m.iter().enumerate() {
            if row.iter().sum::<f64>() > 0.0 {
                w[i] = 1.0;
            }
        }
        w
    })
}

fn state(i: usize) -> EmotionState {
    EmotionState::new(i).expect("index below 17")
}

/// `n_steps` states; the first from the stationary distribution when one
/// exists, otherwise uniform over states with non-zero rows.
pub fn sample_chain(m: &Matrix17, n_steps: usize, rng: &mut impl Rng) -> Result<Vec<EmotionState>> {
    validate_matrix(m)?;
    let mut out = Vec::with_capacity(n_steps);
    if n_steps == 0 {
        return Ok(out);
    }
    let mut s = draw(&initial_weights(m), rng);
    out.push(state(s));
    while out.len() < n_steps {
        s = draw(&m[s], rng);
        out.push(state(s));
    }
    Ok(out)
}

/// Chain for one synthetic user: starts on an active state (stationary
/// distribution restricted to active states) and runs at least `n_steps`,
/// continuing until it ends on an active state.
pub fn sample_user_chain(m: &Matrix17, n_steps: usize, rng: &mut impl Rng) -> Result<Vec<EmotionState>> {
    validate_matrix(m)?;
    let mut w = initial_weights(m);
    w[EmotionState::NO_ACT.index()] = 0.0;
    if w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("no active state has stationary mass".into()));
    }
    let mut s = draw(&w, rng);
    let mut out = vec![state(s)];
    let cap = n_steps.max(1) + 1_000_000;
    while out.len() < n_steps.max(1) || !out.last().unwrap().is_active() {
        if out.len() >= cap {
            return Err(Error::Config("chain does not return to an active state".into()));
        }
        s = draw(&m[s], rng);
        out.push(state(s));
    }
    Ok(out)
}

/// One post per active window, at `t0 + w·1800`. The chain must start and
/// end on active states so the windows line up with the posts.
pub fn emit_posts(
    states: &[EmotionState],
    spec: &GeneratorSpec,
    class: Label,
    user_id: &str,
    t0: i64,
    rng: &mut impl Rng,
) -> Result<Vec<Post>> {
    let (Some(first), Some(last)) = (states.first(), states.last()) else {
        return Ok(Vec::new());
    };
    if !first.is_active() || !last.is_active() {
        return Err(Error::Invalid(format!(
            "user {user_id}: a chain must start and end on an active state"
        )));
    }
    let mut token_lists = Vec::with_capacity(4);
    for e in Emotion::ALL {
        match spec.emotion_token_map.get(&e).filter(|t| !t.is_empty()) {
            Some(t) => token_lists.push(t),
            None => return Err(Error::Config(format!("emotion_token_map has no tokens for {e}"))),
        }
    }
    let year = corpus::utc_year(t0);
    let filler = spec.drift_for(class, year).unwrap_or(&spec.filler_tokens);
    let mut posts = Vec::new();
    for (w, s) in states.iter().enumerate() {
        let Some(v) = s.decode() else { continue };
        let mut tokens: Vec<&str> = Vec::new();
        for e in Emotion::ALL {
            if v.get(e) > 0 {
                tokens.push(token_lists[e.index()].choose(rng).expect("non-empty"));
            }
        }
        for _ in 0..spec.filler_per_post {
            tokens.push(filler.choose(rng).ok_or_else(|| Error::Config("empty filler list".into()))?);
        }
        tokens.shuffle(rng);
        posts.push(Post {
            user_id: user_id.to_string(),
            created_utc: t0 + w as i64 * WINDOW_SECONDS,
            subreddit: spec.subreddit.clone(),
            body: format!("{}.", tokens.join(" ")),
        });
    }
    Ok(posts)
}

/// Generated users with their ground-truth chains.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub users: Vec<UserTimeline>,
    pub chains: BTreeMap<String, Vec<EmotionState>>,
}

fn year_start(year: i32) -> i64 {
    Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).single().expect("valid date").timestamp()
}

/// Users of each class are assigned to years round-robin; each timeline
/// starts at a random offset chosen so that it ends within its year when it
/// fits.
pub fn build_synthetic_cohort(spec: &GeneratorSpec) -> Result<SyntheticCohort> {
    spec.validate(&Lexicon::default())?;
    let matrices = spec.matrices()?;
    let years = spec.years();
    let jobs: Vec<(Label, usize)> = matrices
        .keys()
        .flat_map(|&l| (0..spec.users_per_class).map(move |i| (l, i)))
        .collect();
    let generated = jobs
        .par_iter()
        .map(|&(class, i)| {
            let mut rng = seed::rng(spec.seed, "synth-user", &[class.index() as u64, i as u64]);
            let chain = sample_user_chain(&matrices[&class], spec.windows_per_user, &mut rng)?;
            let year = years[i % years.len()];
            let span = (chain.len() as i64 - 1) * WINDOW_SECONDS;
            let room = year_start(year + 1) - year_start(year) - span;
            let t0 = year_start(year) + if room > 0 { rng.gen_range(0..room) } else { 0 };
            let user_id = format!("{class}_{i:04}");
            let posts = emit_posts(&chain, spec, class, &user_id, t0, &mut rng)?;
            Ok((
                UserTimeline {
                    user_id: user_id.clone(),
                    posts,
                    label: class,
                    report_utc: None,
                },
                chain,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut users = Vec::with_capacity(generated.len());
    let mut chains = BTreeMap::new();
    for (u, c) in generated {
        chains.insert(u.user_id.clone(), c);
        users.push(u);
    }
    Ok(SyntheticCohort { users, chains })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub user_id: String,
    pub states: Vec<u8>,
}

pub const CHAINS_FILE: &str = "chains.jsonl";
pub const SPEC_FILE: &str = "generator_spec.json";
pub const RAW_POSTS_FILE: &str = "raw_posts.jsonl";
pub const COHORT_SPEC_FILE: &str = "cohort_spec.json";

/// Writes the dataset (`manifest.jsonl`, `posts.jsonl`), the ground-truth
/// chains and the resolved spec. With `raw`, also writes a raw archive with a
/// self-report post after each disorder user's timeline plus a matching
/// cohort spec, so the corpus stage can rebuild the same cohort.
pub fn write_synthetic(dir: &Path, cohort: &SyntheticCohort, spec: &GeneratorSpec, raw: bool) -> Result<()> {
    corpus::write_dataset(dir, &cohort.users)?;
    io::write_jsonl(
        &dir.join(CHAINS_FILE),
        cohort.chains.iter().map(|(id, c)| ChainRow {
            user_id: id.clone(),
            states: c.iter().map(|s| s.index() as u8).collect(),
        }),
    )?;
    let mut resolved = spec.clone();
    for (l, m) in spec.matrices()? {
        resolved
            .class_matrices
            .insert(l, MatrixSource::Rows(m.iter().map(|r| r.to_vec()).collect()));
    }
    io::write_json(&dir.join(SPEC_FILE), &resolved)?;
    if raw {
        let mut posts: Vec<Post> = Vec::new();
        for u in &cohort.users {
            posts.extend(u.posts.iter().cloned());
            if let (Some(keyword), Some(last)) = (disorder_keyword(u.label), u.posts.last()) {
                posts.push(Post {
                    user_id: u.user_id.clone(),
                    created_utc: last.created_utc + WINDOW_SECONDS,
                    subreddit: keyword.to_string(),
                    body: format!("I was diagnosed with {keyword} last month."),
                });
            }
        }
        io::write_jsonl(&dir.join(RAW_POSTS_FILE), &posts)?;
        let cohort_spec = CohortSpec {
            control_top_subreddits: vec![spec.subreddit.clone()],
            time_range: [spec.start_year, spec.end_year],
            seed: spec.seed,
            ..CohortSpec::default()
        };
        io::write_json(&dir.join(COHORT_SPEC_FILE), &cohort_spec)?;
    }
    Ok(())
}

fn disorder_keyword(label: Label) -> Option<&'static str> {
    match label {
        Label::Control => None,
        Label::Bd => Some("bipolar"),
        Label::Mdd => Some("depression"),
        Label::Ad => Some("anxiety"),
    }
}

pub fn read_chains(dir: &Path) -> Result<BTreeMap<String, Vec<EmotionState>>> {
    let rows: Vec<ChainRow> = io::read_jsonl(&dir.join(CHAINS_FILE))?;
    rows.into_iter()
        .map(|r| {
            let states = r
                .states
                .iter()
                .map(|&s| EmotionState::new(s as usize).ok_or_else(|| Error::Invalid(format!("bad state {s}"))))
                .collect::<Result<Vec<_>>>()?;
            Ok((r.user_id, states))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::{label_timeline, LexiconLabeler};
    use crate::fingerprint::{transition_matrix, window_states, WindowConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_spec() -> GeneratorSpec {
        GeneratorSpec {
            users_per_class: 6,
            windows_per_user: 60,
            ..GeneratorSpec::default()
        }
    }

    fn recovered_states(user: &UserTimeline) -> Vec<EmotionState> {
        let labelled = label_timeline(user, &LexiconLabeler::default());
        let events: Vec<_> = labelled.posts.iter().map(|p| (p.created_utc, p.vector())).collect();
        window_states(&events, &WindowConfig::default()).unwrap()
    }

    #[test]
    fn bundled_matrices_validate() {
        for l in Label::ALL {
            validate_matrix(&default_matrix(l)).unwrap();
        }
        GeneratorSpec::default().validate(&Lexicon::default()).unwrap();
    }

    fn row_tv(a: &Matrix17, b: &Matrix17) -> f64 {
        a.iter()
            .zip(b)
            .map(|(r, s)| 0.5 * r.iter().zip(s).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .sum::<f64>()
            / N_STATES as f64
    }

    #[test]
    fn control_is_far_from_each_disorder() {
        let control = default_matrix(Label::Control);
        for l in Label::DISORDERS {
            assert!(row_tv(&control, &default_matrix(l)) >= 0.3, "{l}");
        }
    }

    #[test]
    fn bundled_shapes() {
        let col = |m: &Matrix17, pred: &dyn Fn(usize) -> bool| -> f64 {
            m.iter().map(|r| (0..16).filter(|&j| pred(j)).map(|j| r[j]).sum::<f64>()).sum()
        };
        let control = default_matrix(Label::Control);
        for l in Label::DISORDERS {
            let m = default_matrix(l);
            assert!(col(&control, &|j| j == 0) > col(&m, &|j| j == 0));
            assert!(col(&control, &|j| j & 2 != 0) > col(&m, &|j| j & 2 != 0));
            assert!(col(&control, &|j| j & 8 != 0) > col(&m, &|j| j & 8 != 0));
        }
    }

    #[test]
    fn cycle_and_constant_chains() {
        let mut cycle = [[0.0; N_STATES]; N_STATES];
        let mut constant = [[0.0; N_STATES]; N_STATES];
        for i in 0..N_STATES {
            cycle[i][(i + 1) % N_STATES] = 1.0;
            constant[i][i] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = sample_chain(&cycle, 40, &mut rng).unwrap();
        for w in c.windows(2) {
            assert_eq!(w[1].index(), (w[0].index() + 1) % N_STATES);
        }
        let k = sample_chain(&constant, 40, &mut rng).unwrap();
        assert!(k.iter().all(|&s| s == k[0]));
    }

    #[test]
    fn empirical_transitions_converge() {
        // support on N, J and no-act
        let mut m = [[0.0; N_STATES]; N_STATES];
        m[0][0] = 0.5;
        m[0][2] = 0.3;
        m[0][16] = 0.2;
        m[2][0] = 0.6;
        m[2][16] = 0.4;
        m[16][2] = 0.7;
        m[16][16] = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chain = sample_chain(&m, 100_000, &mut rng).unwrap();
        let est = transition_matrix(&chain).matrix;
        for i in 0..N_STATES {
            for j in 0..N_STATES {
                assert!((est[i][j] - m[i][j]).abs() < 0.01, "{i} {j}");
            }
        }
    }

    #[test]
    fn reachable_zero_row_rejected() {
        let mut m = [[0.0; N_STATES]; N_STATES];
        m[0][1] = 1.0;
        assert!(validate_matrix(&m).is_err());
        m[1][0] = 1.0;
        validate_matrix(&m).unwrap();
        m[1][0] = 0.9;
        assert!(validate_matrix(&m).is_err());
    }

    #[test]
    fn emit_examples() {
        let spec = GeneratorSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seq = [state(2), EmotionState::NO_ACT, state(2)];
        let posts = emit_posts(&seq, &spec, Label::Control, "u", 1_000, &mut rng).unwrap();
        assert_eq!(posts.iter().map(|p| p.created_utc).collect::<Vec<_>>(), vec![1_000, 4_600]);
        let joy = &spec.emotion_token_map[&Emotion::Joy];
        for p in &posts {
            assert!(p.body.ends_with('.') && !p.body.contains('?'));
            assert!(joy.iter().any(|t| p.body.contains(t.as_str())));
        }
        let posts = emit_posts(&[state(9)], &spec, Label::Control, "u", 0, &mut rng).unwrap();
        assert_eq!(posts.len(), 1);
        let lex = Lexicon::default();
        assert_eq!(lexicon_label(&posts[0].body, &lex), EmotionVector::new(1, 0, 0, 1));
        assert!(emit_posts(&[EmotionState::NO_ACT, state(1)], &spec, Label::Control, "u", 0, &mut rng).is_err());
        let mut missing = spec.clone();
        missing.emotion_token_map.remove(&Emotion::Fear);
        assert!(emit_posts(&[state(1)], &missing, Label::Control, "u", 0, &mut rng).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let cohort = build_synthetic_cohort(&small_spec()).unwrap();
        assert_eq!(cohort.users.len(), 24);
        for u in &cohort.users {
            assert_eq!(recovered_states(u), cohort.chains[&u.user_id], "{}", u.user_id);
        }
    }

    #[test]
    fn years_are_populated_and_contained() {
        let cohort = build_synthetic_cohort(&small_spec()).unwrap();
        let mut years = BTreeSet::new();
        for u in &cohort.users {
            let first = corpus::utc_year(u.posts[0].created_utc);
            assert_eq!(Some(first), corpus::year_bucket(&u.posts));
            years.insert(first);
        }
        assert_eq!(years, (2011..=2016).collect());
    }

    #[test]
    fn deterministic_by_seed() {
        let a = build_synthetic_cohort(&small_spec()).unwrap();
        let b = build_synthetic_cohort(&small_spec()).unwrap();
        let c = build_synthetic_cohort(&GeneratorSpec {
            seed: 1,
            ..small_spec()
        })
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sliding_drift_changes_vocabulary_not_states() {
        let spec = GeneratorSpec {
            users_per_class: 18,
            ..small_spec()
        }
        .with_sliding_drift(7);
        spec.validate(&Lexicon::default()).unwrap();
        let cohort = build_synthetic_cohort(&spec).unwrap();
        let mut vocab: BTreeMap<(Label, i32), BTreeSet<String>> = BTreeMap::new();
        for u in &cohort.users {
            assert_eq!(recovered_states(u), cohort.chains[&u.user_id]);
            let year = corpus::year_bucket(&u.posts).unwrap();
            let entry = vocab.entry((u.label, year)).or_default();
            for p in &u.posts {
                entry.extend(p.body.trim_end_matches('.').split(' ').filter(|t| t.contains("topic")).map(String::from));
            }
        }
        let first = &vocab[&(Label::Bd, 2011)];
        assert!(first.iter().all(|t| t.starts_with("bdtopic")));
        assert!(first.is_disjoint(&vocab[&(Label::Bd, 2018)]));
        assert!(first.is_disjoint(&vocab[&(Label::Mdd, 2011)]));
        assert!(!first.is_disjoint(&vocab[&(Label::Bd, 2012)]));
    }

    #[test]
    fn emotional_filler_rejected() {
        let mut spec = small_spec();
        spec.filler_tokens.push("happy".into());
        assert!(spec.validate(&Lexicon::default()).is_err());
        let mut spec = small_spec();
        spec.emotion_token_map.insert(Emotion::Joy, vec!["table".into()]);
        assert!(spec.validate(&Lexicon::default()).is_err());
        let mut spec = small_spec();
        spec.filler_tokens.push("never".into());
        assert!(spec.validate(&Lexicon::default()).is_err());
    }

    #[test]
    fn persistence_keeps_the_base_distribution() {
        let base = stationary_distribution(&default_matrix(Label::Control)).unwrap();
        for rho in [0.0, 0.3, 0.9] {
            let m = persistence_matrix(&base, rho).unwrap();
            validate_matrix(&m).unwrap();
            for j in 0..N_STATES {
                let next: f64 = (0..N_STATES).map(|i| base[i] * m[i][j]).sum();
                assert!((next - base[j]).abs() < 1e-12);
            }
            assert!((m[3][3] - (rho + (1.0 - rho) * base[3])).abs() < 1e-12);
        }
        assert!(persistence_matrix(&base, 1.0).is_err());
        assert!(persistence_matrix(&[0.0; N_STATES], 0.2).is_err());
        let spec = GeneratorSpec::default()
            .shared_marginal(&base, &[(Label::Control, 0.1), (Label::Bd, 0.5)])
            .unwrap();
        assert_eq!(spec.matrices().unwrap().len(), 2);
    }
}
