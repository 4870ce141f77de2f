//! tf-idf content baseline.
//!
//! One document per user (all posts joined). Tokens are lowercased runs of
//! alphanumerics of length ≥ 2. Weights are raw term counts times
//! `ln((1 + N) / (1 + df)) + 1`, and each row is scaled to unit L2 norm. The
//! vocabulary comes from training documents only and never contains a term
//! from the exclusion lists.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

const DISORDER_TERMS: &str = include_str!("../../data/exclusion_disorder_terms.txt");
const DRUG_TERMS: &str = include_str!("../../data/exclusion_drug_terms.txt");

fn parse_term_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn default_disorder_terms() -> Vec<String> {
    parse_term_list(DISORDER_TERMS)
}

pub fn default_drug_terms() -> Vec<String> {
    parse_term_list(DRUG_TERMS)
}

/// Reads a one-term-per-line exclusion file (`#` starts a comment line).
pub fn load_term_list(path: &Path) -> Result<Vec<String>> {
    Ok(parse_term_list(&io::read_to_string(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfidfConfig {
    pub disorder_terms: Vec<String>,
    pub drug_terms: Vec<String>,
    pub min_doc_freq: usize,
    pub lowercase: bool,
    /// Keep only the most frequent terms (by document frequency, ties by
    /// term) when set.
    pub max_features: Option<usize>,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        Self {
            disorder_terms: default_disorder_terms(),
            drug_terms: default_drug_terms(),
            min_doc_freq: 1,
            lowercase: true,
            max_features: None,
        }
    }
}

impl TfidfConfig {
    fn excluded(&self) -> BTreeSet<String> {
        self.disorder_terms
            .iter()
            .chain(&self.drug_terms)
            .map(|t| t.to_lowercase())
            .collect()
    }
}

pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() > 1)
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    /// term → column, columns in lexicographic term order
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub lowercase: bool,
}

impl TfidfVectorizer {
    pub fn fit<S: AsRef<str>>(docs: &[S], config: &TfidfConfig) -> Result<Self> {
        let excluded = config.excluded();
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let terms: BTreeSet<String> = tokenize(doc.as_ref(), config.lowercase)
                .into_iter()
                .filter(|t| !excluded.contains(&t.to_lowercase()))
                .collect();
            for t in terms {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = df
            .into_iter()
            .filter(|(_, c)| *c >= config.min_doc_freq)
            .collect();
        if let Some(max) = config.max_features {
            kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            kept.truncate(max);
            kept.sort_by(|a, b| a.0.cmp(&b.0));
        }
        if kept.is_empty() {
            return Err(Error::Invalid("tf-idf vocabulary is empty".into()));
        }
        let n = docs.len() as f64;
        let idf = kept
            .iter()
            .map(|(_, c)| ((1.0 + n) / (1.0 + *c as f64)).ln() + 1.0)
            .collect();
        let vocabulary = kept
            .into_iter()
            .enumerate()
            .map(|(i, (t, _))| (t, i))
            .collect();
        Ok(Self {
            vocabulary,
            idf,
            lowercase: config.lowercase,
        })
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// Dense unit-norm row; out-of-vocabulary tokens are ignored.
    pub fn transform(&self, doc: &str) -> Vec<f64> {
        let mut row = vec![0.0; self.dim()];
        for t in tokenize(doc, self.lowercase) {
            if let Some(&j) = self.vocabulary.get(&t) {
                row[j] += 1.0;
            }
        }
        for (v, idf) in row.iter_mut().zip(&self.idf) {
            *v *= idf;
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut row {
                *v /= norm;
            }
        }
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_docs_are_orthogonal_unit_rows() {
        let docs = ["apple banana", "cherry date"];
        let v = TfidfVectorizer::fit(&docs, &TfidfConfig::default()).unwrap();
        let a = v.transform(docs[0]);
        let b = v.transform(docs[1]);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(dot, 0.0);
        for r in [&a, &b] {
            assert!((r.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn excluded_terms_never_enter_vocabulary() {
        let docs = ["My Bipolar diagnosis and lithium", "Zoloft SSRI ii mood"];
        let v = TfidfVectorizer::fit(&docs, &TfidfConfig::default()).unwrap();
        for t in ["bipolar", "lithium", "zoloft", "ssri", "ii", "mood"] {
            assert!(!v.vocabulary.contains_key(t), "{t}");
        }
        assert!(v.vocabulary.contains_key("diagnosis"));
        // single-character tokens are dropped
        assert!(!v.vocabulary.contains_key("a"));
    }

    #[test]
    fn hand_computed_values() {
        // N = 3; df(aa)=2, df(bb)=1, df(cc)=2
        let docs = ["aa aa bb", "aa cc", "cc"];
        let v = TfidfVectorizer::fit(&docs, &TfidfConfig::default()).unwrap();
        let idf2 = (4.0f64 / 3.0).ln() + 1.0;
        let idf1 = 2.0f64.ln() + 1.0;
        let (a, b) = (2.0 * idf2, idf1);
        let norm = (a * a + b * b).sqrt();
        let row = v.transform(docs[0]);
        assert!((row[0] - a / norm).abs() < 1e-12);
        assert!((row[1] - b / norm).abs() < 1e-12);
        assert_eq!(row[2], 0.0);
        let row = v.transform(docs[2]);
        assert_eq!(row, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_vocabulary_is_fatal() {
        let docs = ["a b c", "bipolar"];
        assert!(TfidfVectorizer::fit(&docs, &TfidfConfig::default()).is_err());
    }

    #[test]
    fn oov_tokens_ignored() {
        let v = TfidfVectorizer::fit(&["alpha beta"], &TfidfConfig::default()).unwrap();
        assert!(v.transform("gamma delta").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bundled_lists_match_footnotes() {
        let d = default_disorder_terms();
        assert_eq!(d.len(), 13);
        assert!(d.contains(&"hypomania".to_string()));
        assert_eq!(default_drug_terms(), ["seroquel", "lithium", "lamictal", "depakote", "ssri", "zoloft"]);
    }
}
