//! Sentence segmentation, interrogative filtering and emotion labelling.
//!
//! Every sentence gets four binary flags (anger, fear, joy, sadness) from an
//! [`EmotionLabeler`]; a post's emotion vector is the component-wise sum of
//! the flags of its non-interrogative sentences.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::UserTimeline;
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Fear,
    Joy,
    Sadness,
}

impl Emotion {
    /// Canonical component order of every emotion vector.
    pub const ALL: [Emotion; 4] = [Emotion::Anger, Emotion::Fear, Emotion::Joy, Emotion::Sadness];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        Emotion::ALL.into_iter().find(|e| e.as_str() == s.trim().to_ascii_lowercase())
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Counts ordered (anger, fear, joy, sadness).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmotionVector(pub [u32; 4]);

impl EmotionVector {
    pub const ZERO: EmotionVector = EmotionVector([0; 4]);

    pub fn new(anger: u32, fear: u32, joy: u32, sadness: u32) -> Self {
        Self([anger, fear, joy, sadness])
    }

    pub fn get(&self, e: Emotion) -> u32 {
        self.0[e.index()]
    }

    pub fn set(&mut self, e: Emotion) {
        self.0[e.index()] = 1;
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&c| c <= 1)
    }

    /// Any count above one becomes one.
    pub fn clamped(&self) -> Self {
        Self(self.0.map(|c| c.min(1)))
    }
}

impl std::ops::Add for EmotionVector {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] + rhs.0[i]))
    }
}

impl std::ops::AddAssign for EmotionVector {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for EmotionVector {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    /// Position in the post's full sentence list, before interrogatives are
    /// removed. Stable key for precomputed labels.
    pub index_in_post: usize,
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits on runs of `.`, `!`, `?` (kept with the preceding sentence) and on
/// newlines. Fragments are trimmed; empty ones are dropped.
pub fn split_sentences(body: &str) -> Vec<Sentence> {
    let mut pieces: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\n' || c == '\r' {
            pieces.push(std::mem::take(&mut current));
        } else if is_terminal(c) {
            current.push(c);
            while let Some(&next) = chars.peek() {
                if !is_terminal(next) {
                    break;
                }
                current.push(next);
                chars.next();
            }
            pieces.push(std::mem::take(&mut current));
        } else {
            current.push(c);
        }
    }
    pieces.push(current);
    pieces
        .into_iter()
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .enumerate()
        .map(|(index_in_post, text)| Sentence {
            text,
            index_in_post,
        })
        .collect()
}

/// A sentence is interrogative when its last non-whitespace character is `?`.
pub fn is_interrogative(text: &str) -> bool {
    text.trim_end().ends_with('?')
}

pub fn filter_interrogative(sentences: Vec<Sentence>) -> Vec<Sentence> {
    sentences
        .into_iter()
        .filter(|s| !is_interrogative(&s.text))
        .collect()
}

const NEGATORS: [&str; 3] = ["not", "no", "never"];
const NEGATION_WINDOW: usize = 2;

/// Lowercases, expands the `n't` clitic to `not` and splits on
/// non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text
        .to_lowercase()
        .replace("n't", " not ")
        .replace("n\u{2019}t", " not ");
    lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Word lists for the four emotions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    words: [BTreeSet<String>; 4],
}

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.csv");

#[derive(Debug, Deserialize)]
struct LexiconRow {
    emotion: String,
    word: String,
}

impl Lexicon {
    pub fn from_sets(words: [BTreeSet<String>; 4]) -> Result<Self> {
        if let Some(e) = Emotion::ALL.iter().find(|e| words[e.index()].is_empty()) {
            return Err(Error::Config(format!("lexicon has no words for `{e}`")));
        }
        Ok(Self {
            words: words.map(|set| set.into_iter().map(|w| w.to_lowercase()).collect()),
        })
    }

    /// Parses `emotion,word` CSV rows (header row required).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut words: [BTreeSet<String>; 4] = Default::default();
        for (i, row) in rdr.deserialize::<LexiconRow>().enumerate() {
            let row = row.map_err(|e| Error::parse("lexicon", e))?;
            let emotion = Emotion::parse(&row.emotion).ok_or_else(|| {
                Error::parse("lexicon", format!("row {}: unknown emotion `{}`", i + 2, row.emotion))
            })?;
            if !row.word.is_empty() {
                words[emotion.index()].insert(row.word.to_lowercase());
            }
        }
        Self::from_sets(words)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(io::open(path)?)
    }

    pub fn words(&self, e: Emotion) -> &BTreeSet<String> {
        &self.words[e.index()]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.iter().any(|s| s.contains(word))
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_csv(DEFAULT_LEXICON.as_bytes()).expect("bundled lexicon is valid")
    }
}

/// Binary flags for one sentence: an emotion fires when one of its words
/// occurs outside the two tokens that follow a negator.
pub fn lexicon_label(sentence: &str, lexicon: &Lexicon) -> EmotionVector {
    let tokens = tokenize(sentence);
    let mut negated_until: Option<usize> = None;
    let mut flags = EmotionVector::ZERO;
    for (i, tok) in tokens.iter().enumerate() {
        let suppressed = negated_until.is_some_and(|end| i <= end);
        if NEGATORS.contains(&tok.as_str()) {
            negated_until = Some(i + NEGATION_WINDOW);
            continue;
        }
        if suppressed {
            continue;
        }
        for e in Emotion::ALL {
            if lexicon.words[e.index()].contains(tok) {
                flags.set(e);
            }
        }
    }
    flags
}

/// Identifies a sentence within a user's timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentenceKey<'a> {
    pub user_id: &'a str,
    pub post_index: usize,
    pub sentence_index: usize,
}

/// Source of sentence-level emotion flags. Implementations must be pure: the
/// same key and text always give the same flags.
pub trait EmotionLabeler: Send + Sync {
    fn name(&self) -> &str;
    fn label(&self, key: &SentenceKey<'_>, text: &str) -> EmotionVector;
}

#[derive(Debug, Clone, Default)]
pub struct LexiconLabeler {
    pub lexicon: Lexicon,
}

impl LexiconLabeler {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }
}

impl EmotionLabeler for LexiconLabeler {
    fn name(&self) -> &str {
        "lexicon"
    }

    fn label(&self, _key: &SentenceKey<'_>, text: &str) -> EmotionVector {
        lexicon_label(text, &self.lexicon)
    }
}

/// One sentence's flags; the row format of both precomputed-label input and
/// the `emotion label` output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceLabelRow {
    pub user_id: String,
    pub post_index: usize,
    pub sentence_index: usize,
    pub anger: u8,
    pub fear: u8,
    pub joy: u8,
    pub sadness: u8,
}

impl SentenceLabelRow {
    fn new(key: &SentenceKey<'_>, v: EmotionVector) -> Self {
        Self {
            user_id: key.user_id.to_string(),
            post_index: key.post_index,
            sentence_index: key.sentence_index,
            anger: v.0[0] as u8,
            fear: v.0[1] as u8,
            joy: v.0[2] as u8,
            sadness: v.0[3] as u8,
        }
    }

    fn flags(&self) -> Result<EmotionVector> {
        let raw = [self.anger, self.fear, self.joy, self.sadness];
        if let Some(bad) = raw.iter().find(|&&v| v > 1) {
            return Err(Error::Invalid(format!(
                "non-binary emotion value {bad} for user {} post {} sentence {}",
                self.user_id, self.post_index, self.sentence_index
            )));
        }
        Ok(EmotionVector(raw.map(u32::from)))
    }
}

/// Labels produced elsewhere (for example by a transformer classifier),
/// keyed by (user, post index, sentence index). Unknown sentences get no
/// emotions and are counted.
#[derive(Debug, Default)]
pub struct PrecomputedLabels {
    map: HashMap<(String, usize, usize), EmotionVector>,
    missing: AtomicUsize,
}

impl PrecomputedLabels {
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.load(Ordering::Relaxed)
    }

    pub fn from_rows(rows: impl IntoIterator<Item = SentenceLabelRow>) -> Result<Self> {
        let mut map = HashMap::new();
        for row in rows {
            let flags = row.flags()?;
            map.insert((row.user_id, row.post_index, row.sentence_index), flags);
        }
        Ok(Self {
            map,
            missing: AtomicUsize::new(0),
        })
    }
}

/// Loads precomputed sentence labels from JSONL. Values other than 0 or 1
/// are rejected.
pub fn load_precomputed_labels(path: &Path) -> Result<PrecomputedLabels> {
    #[derive(Deserialize)]
    struct RawRow {
        user_id: String,
        post_index: usize,
        sentence_index: usize,
        anger: i64,
        fear: i64,
        joy: i64,
        sadness: i64,
    }
    let rows: Vec<RawRow> = io::read_jsonl(path)?;
    let checked = rows
        .into_iter()
        .map(|r| {
            let vals = [r.anger, r.fear, r.joy, r.sadness];
            if vals.iter().any(|v| !(0..=1).contains(v)) {
                return Err(Error::Invalid(format!(
                    "{}: non-binary emotion values {vals:?} for user {} post {} sentence {}",
                    path.display(),
                    r.user_id,
                    r.post_index,
                    r.sentence_index
                )));
            }
            Ok(SentenceLabelRow {
                user_id: r.user_id,
                post_index: r.post_index,
                sentence_index: r.sentence_index,
                anger: vals[0] as u8,
                fear: vals[1] as u8,
                joy: vals[2] as u8,
                sadness: vals[3] as u8,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PrecomputedLabels::from_rows(checked)
}

impl EmotionLabeler for PrecomputedLabels {
    fn name(&self) -> &str {
        "precomputed"
    }

    fn label(&self, key: &SentenceKey<'_>, _text: &str) -> EmotionVector {
        match self
            .map
            .get(&(key.user_id.to_string(), key.post_index, key.sentence_index))
        {
            Some(v) => *v,
            None => {
                self.missing.fetch_add(1, Ordering::Relaxed);
                EmotionVector::ZERO
            }
        }
    }
}

/// Emotion vector of one post plus the flags of each surviving sentence.
pub fn post_emotion_detailed(
    user_id: &str,
    post_index: usize,
    body: &str,
    labeler: &dyn EmotionLabeler,
) -> (EmotionVector, Vec<SentenceLabelRow>) {
    let mut rows = Vec::new();
    let mut total = EmotionVector::ZERO;
    for sentence in filter_interrogative(split_sentences(body)) {
        let key = SentenceKey {
            user_id,
            post_index,
            sentence_index: sentence.index_in_post,
        };
        let flags = labeler.label(&key, &sentence.text).clamped();
        total += flags;
        rows.push(SentenceLabelRow::new(&key, flags));
    }
    (total, rows)
}

/// Component-wise sum of sentence flags over the post's non-interrogative
/// sentences.
pub fn post_emotion(
    user_id: &str,
    post_index: usize,
    body: &str,
    labeler: &dyn EmotionLabeler,
) -> EmotionVector {
    post_emotion_detailed(user_id, post_index, body, labeler).0
}

/// A post's emotion vector with its timestamp; input of the fingerprint stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostEmotionRow {
    pub user_id: String,
    pub post_index: usize,
    pub created_utc: i64,
    pub anger: u32,
    pub fear: u32,
    pub joy: u32,
    pub sadness: u32,
}

impl PostEmotionRow {
    pub fn vector(&self) -> EmotionVector {
        EmotionVector::new(self.anger, self.fear, self.joy, self.sadness)
    }
}

#[derive(Debug, Default)]
pub struct LabelledTimeline {
    pub sentences: Vec<SentenceLabelRow>,
    pub posts: Vec<PostEmotionRow>,
}

pub fn label_timeline(timeline: &UserTimeline, labeler: &dyn EmotionLabeler) -> LabelledTimeline {
    let mut out = LabelledTimeline::default();
    for (post_index, post) in timeline.posts.iter().enumerate() {
        let (v, rows) = post_emotion_detailed(&timeline.user_id, post_index, &post.body, labeler);
        out.sentences.extend(rows);
        out.posts.push(PostEmotionRow {
            user_id: timeline.user_id.clone(),
            post_index,
            created_utc: post.created_utc,
            anger: v.0[0],
            fear: v.0[1],
            joy: v.0[2],
            sadness: v.0[3],
        });
    }
    out
}

/// Labels every timeline in parallel; output keeps the input order.
pub fn label_dataset(
    timelines: &[UserTimeline],
    labeler: &dyn EmotionLabeler,
) -> Vec<LabelledTimeline> {
    timelines
        .par_iter()
        .map(|t| label_timeline(t, labeler))
        .collect()
}

pub const SENTENCE_LABELS_FILE: &str = "sentence_labels.jsonl";
pub const POST_EMOTIONS_FILE: &str = "post_emotions.jsonl";
