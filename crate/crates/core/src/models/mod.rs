//! Classifiers over fingerprint features and the tf-idf content baseline.
//!
//! Training always reorders rows canonically (by user id, then label, then
//! feature values) before any seeded sampling, so the caller's row order
//! never changes a trained model.

pub mod forest;
pub mod linear;
pub mod tfidf;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Record, Trainer};
use crate::io;

pub use forest::{Forest, ForestParams};
pub use linear::{LinearModel, LogisticParams, MarginParams};
pub use tfidf::{TfidfConfig, TfidfVectorizer};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Rows of features with binary labels (disorder = true).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub user_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<bool>, user_ids: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() || rows.len() != user_ids.len() {
            return Err(Error::Invalid(format!(
                "feature matrix has {} rows, {} labels, {} ids",
                rows.len(),
                labels.len(),
                user_ids.len()
            )));
        }
        if let Some(d) = rows.first().map(Vec::len) {
            if let Some(bad) = rows.iter().find(|r| r.len() != d) {
                return Err(Error::Dimension {
                    expected: d,
                    actual: bad.len(),
                });
            }
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("feature matrix contains NaN or infinity".into()));
        }
        Ok(Self {
            rows,
            labels,
            user_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.user_ids[a]
                .cmp(&self.user_ids[b])
                .then(self.labels[a].cmp(&self.labels[b]))
                .then_with(|| {
                    self.rows[a]
                        .iter()
                        .zip(&self.rows[b])
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
        });
        idx
    }

    fn canonical(&self) -> (Vec<&[f64]>, Vec<bool>) {
        let order = self.canonical_order();
        (
            order.iter().map(|&i| self.rows[i].as_slice()).collect(),
            order.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TreeEnsemble,
    Logistic,
    Margin,
}

impl ModelKind {
    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::TreeEnsemble => "rf",
            ModelKind::Logistic => "logreg",
            ModelKind::Margin => "svm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rf" | "tree_ensemble" | "forest" => Ok(ModelKind::TreeEnsemble),
            "logreg" | "logistic" => Ok(ModelKind::Logistic),
            "svm" | "margin" => Ok(ModelKind::Margin),
            other => Err(Error::Config(format!(
                "unknown model kind `{other}` (expected rf, logreg or svm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Er,
    Tfidf,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Er => "er",
            FeatureKind::Tfidf => "tfidf",
        })
    }
}

/// A model kind with its hyperparameters; the `kind` tag selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    #[serde(alias = "tree_ensemble")]
    Rf(ForestParams),
    #[serde(alias = "logreg")]
    Logistic(LogisticParams),
    #[serde(alias = "svm")]
    Margin(MarginParams),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Rf(ForestParams::default())
    }
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Rf(_) => ModelKind::TreeEnsemble,
            ModelConfig::Logistic(_) => ModelKind::Logistic,
            ModelConfig::Margin(_) => ModelKind::Margin,
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::TreeEnsemble => ModelConfig::Rf(ForestParams::default()),
            ModelKind::Logistic => ModelConfig::Logistic(LogisticParams::default()),
            ModelKind::Margin => ModelConfig::Margin(MarginParams::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Rf(p) => p.validate(),
            ModelConfig::Logistic(p) if p.l2 < 0.0 || p.max_epochs == 0 => {
                Err(Error::Config("logistic needs l2 >= 0 and max_epochs >= 1".into()))
            }
            ModelConfig::Margin(p) if p.l2 < 0.0 || p.epochs == 0 => {
                Err(Error::Config("margin needs l2 >= 0 and epochs >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    Forest(Forest),
    Logistic {
        params: LogisticParams,
        model: LinearModel,
        epochs: usize,
        grad_max_norm: f64,
    },
    Margin {
        params: MarginParams,
        model: LinearModel,
    },
}

/// Serializable trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub feature_kind: FeatureKind,
    pub seed: u64,
    pub n_features: usize,
    pub parameters: ModelParams,
}

fn check_trainable(data: &FeatureMatrix) -> Result<()> {
    if data.is_empty() || data.n_features() == 0 {
        return Err(Error::Invalid("training data is empty".into()));
    }
    let pos = data.labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == data.len() {
        return Err(Error::Invalid(
            "training labels contain a single class".into(),
        ));
    }
    Ok(())
}

pub fn train(
    config: &ModelConfig,
    data: &FeatureMatrix,
    feature_kind: FeatureKind,
    seed: u64,
) -> Result<TrainedModel> {
    config.validate()?;
    check_trainable(data)?;
    let (rows, labels) = data.canonical();
    let parameters = match config {
        ModelConfig::Rf(p) => ModelParams::Forest(Forest::fit(&rows, &labels, p, seed)?),
        ModelConfig::Logistic(p) => {
            let fit = linear::fit_logistic(&rows, &labels, p)?;
            ModelParams::Logistic {
                params: p.clone(),
                model: fit.model,
                epochs: fit.epochs,
                grad_max_norm: fit.grad_max_norm,
            }
        }
        ModelConfig::Margin(p) => ModelParams::Margin {
            params: p.clone(),
            model: linear::fit_margin(&rows, &labels, p)?,
        },
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: config.kind(),
        feature_kind,
        seed,
        n_features: data.n_features(),
        parameters,
    })
}

pub fn train_tree_ensemble(
    data: &FeatureMatrix,
    params: &ForestParams,
    feature_kind: FeatureKind,
    seed: u64,
) -> Result<TrainedModel> {
    train(&ModelConfig::Rf(params.clone()), data, feature_kind, seed)
}

pub fn train_logistic(
    data: &FeatureMatrix,
    params: &LogisticParams,
    feature_kind: FeatureKind,
    seed: u64,
) -> Result<TrainedModel> {
    train(&ModelConfig::Logistic(params.clone()), data, feature_kind, seed)
}

impl TrainedModel {
    pub fn predict_proba<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let r = r.as_ref();
                if r.len() != self.n_features {
                    return Err(Error::Dimension {
                        expected: self.n_features,
                        actual: r.len(),
                    });
                }
                Ok(match &self.parameters {
                    ModelParams::Forest(f) => f.predict_proba_row(r),
                    ModelParams::Logistic { model, .. } | ModelParams::Margin { model, .. } => {
                        model.probability(r)
                    }
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("model", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let model: TrainedModel =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

/// tf-idf features for a train/test split; the vocabulary comes from the
/// training documents only.
pub fn tfidf_features(
    train_docs: &[(&str, &str, bool)],
    test_docs: &[(&str, &str, bool)],
    config: &TfidfConfig,
) -> Result<(FeatureMatrix, FeatureMatrix, TfidfVectorizer)> {
    let docs: Vec<&str> = train_docs.iter().map(|d| d.1).collect();
    let vectorizer = TfidfVectorizer::fit(&docs, config)?;
    let build = |set: &[(&str, &str, bool)]| {
        FeatureMatrix::new(
            set.iter().map(|d| vectorizer.transform(d.1)).collect(),
            set.iter().map(|d| d.2).collect(),
            set.iter().map(|d| d.0.to_string()).collect(),
        )
    };
    Ok((build(train_docs)?, build(test_docs)?, vectorizer))
}

/// Fits a classifier on fingerprint features.
#[derive(Debug, Clone, PartialEq)]
pub struct ErTrainer {
    pub model: ModelConfig,
}

impl Trainer<Vec<f64>> for ErTrainer {
    fn fit_predict(
        &self,
        train_set: &[&Record<Vec<f64>>],
        test_set: &[&Record<Vec<f64>>],
        seed: u64,
    ) -> Result<Vec<f64>> {
        let data = FeatureMatrix::new(
            train_set.iter().map(|r| r.data.clone()).collect(),
            train_set.iter().map(|r| r.label).collect(),
            train_set.iter().map(|r| r.id.clone()).collect(),
        )?;
        let model = train(&self.model, &data, FeatureKind::Er, seed)?;
        let rows: Vec<&[f64]> = test_set.iter().map(|r| r.data.as_slice()).collect();
        model.predict_proba(&rows)
    }
}

/// Builds tf-idf features from the training fold, then fits a classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfTrainer {
    pub tfidf: TfidfConfig,
    pub model: ModelConfig,
}

impl Trainer<String> for TfidfTrainer {
    fn fit_predict(
        &self,
        train_set: &[&Record<String>],
        test_set: &[&Record<String>],
        seed: u64,
    ) -> Result<Vec<f64>> {
        fn view<'a>(set: &[&'a Record<String>]) -> Vec<(&'a str, &'a str, bool)> {
            set.iter().map(|r| (r.id.as_str(), r.data.as_str(), r.label)).collect()
        }
        let (train_m, test_m, _) = tfidf_features(&view(train_set), &view(test_set), &self.tfidf)?;
        let model = train(&self.model, &train_m, FeatureKind::Tfidf, seed)?;
        model.predict_proba(&test_m.rows)
    }
}
