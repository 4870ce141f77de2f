//! Emotion-state transition fingerprints.
//!
//! A user's post history is turned into a sequence of emotional states over
//! fixed time windows; the first-order transition probability matrix of that
//! sequence (17 states, flattened to 289 features) is the user's fingerprint.
//! The crate covers cohort construction from JSONL post archives, sentence
//! level emotion labelling, fingerprint estimation, classifiers and a tf-idf
//! content baseline, the evaluation harness (splits, cross-validation,
//! FPR at full recall, Welch's t-test, temporal-gap testing), a synthetic
//! cohort generator with known ground truth, and plot/report emitters.

pub mod corpus;
pub mod emotion;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod io;
pub mod models;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
