//! End-to-end run: corpus → emotion → fingerprint → eval.
//!
//! Each stage writes into its own subdirectory of `out_dir` together with a
//! `.stage.json` recording a cache key (hash of the stage config and its
//! input files) and the hashes of its outputs. A rerun skips a stage whose
//! key matches and whose outputs are intact. `artifacts.json` lists every
//! output with its sha256.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{self, CohortSpec, Label, ManifestEntry, UserTimeline};
use crate::emotion::{self, EmotionLabeler, Lexicon, LexiconLabeler, PostEmotionRow};
use crate::error::{Error, Result};
use crate::eval::{
    compute_metrics, cross_validate, fpr_at_full_tpr, make_splits, predict_labels, temporal_harness, CvReport,
    MetricsReport, Record, Split, TemporalReport, Trainer,
};
use crate::fingerprint::{
    self, transition_matrix, window_states, FingerprintRecord, StoreMeta, WindowConfig, STORE_FILE, STORE_META_FILE,
};
use crate::io;
use crate::models::{ErTrainer, FeatureKind, ModelConfig, TfidfConfig, TfidfTrainer};
use crate::report::{self, GapSeries};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    /// A directory holding `manifest.jsonl` and `posts.jsonl`.
    Dataset { dir: PathBuf },
    /// A raw post archive plus cohort rules.
    Raw {
        posts: PathBuf,
        #[serde(default)]
        cohort_spec: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "labeler", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelerConfig {
    Lexicon {
        #[serde(default)]
        path: Option<PathBuf>,
    },
    /// Sentence flags from an external classifier (JSONL rows keyed by
    /// user, post index and sentence index).
    Precomputed { path: PathBuf },
}

impl Default for LabelerConfig {
    fn default() -> Self {
        LabelerConfig::Lexicon { path: None }
    }
}

impl LabelerConfig {
    pub fn build(&self) -> Result<Box<dyn EmotionLabeler>> {
        Ok(match self {
            LabelerConfig::Lexicon { path: None } => Box::new(LexiconLabeler::default()),
            LabelerConfig::Lexicon { path: Some(p) } => Box::new(LexiconLabeler::new(Lexicon::load(p)?)),
            LabelerConfig::Precomputed { path } => Box::new(emotion::load_precomputed_labels(path)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalPlan {
    /// Disorders to separate from the control class, one binary task each.
    pub tasks: Vec<Label>,
    /// Train / validation / test fractions for the held-out evaluation.
    pub split_fractions: [f64; 3],
    /// Folds for cross-validation; 0 disables it.
    pub cv_folds: usize,
    pub tfidf_baseline: bool,
    pub tfidf: TfidfConfig,
    pub tfidf_model: ModelConfig,
    /// Year gaps for the temporal harness; empty disables it.
    pub temporal_gaps: Vec<u32>,
}

impl Default for EvalPlan {
    fn default() -> Self {
        Self {
            tasks: Label::DISORDERS.to_vec(),
            split_fractions: [0.7, 0.15, 0.15],
            cv_folds: 5,
            tfidf_baseline: true,
            tfidf: TfidfConfig::default(),
            tfidf_model: ModelConfig::default(),
            temporal_gaps: (1..=7).collect(),
        }
    }
}

impl EvalPlan {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.contains(&Label::Control) {
            return Err(Error::Config("control is not a disorder task".into()));
        }
        let f = self.split_fractions;
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {f:?} must lie in [0, 1] and sum to 1")));
        }
        if f[0] == 0.0 {
            return Err(Error::Config("train fraction must be positive".into()));
        }
        if self.cv_folds == 1 {
            return Err(Error::Config("cv_folds must be 0 (off) or at least 2".into()));
        }
        if self.temporal_gaps.contains(&0) {
            return Err(Error::Config("temporal gaps must be positive".into()));
        }
        self.tfidf_model.validate()
    }
}

fn default_models() -> Vec<ModelConfig> {
    vec![ModelConfig::default()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    pub input: InputConfig,
    #[serde(default)]
    pub emotion: LabelerConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default = "default_models")]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub eval: EvalPlan,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads TOML or JSON; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = io::read_config(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        rebase(&base, &mut cfg.out_dir);
        match &mut cfg.input {
            InputConfig::Dataset { dir } => rebase(&base, dir),
            InputConfig::Raw { posts, cohort_spec } => {
                rebase(&base, posts);
                if let Some(c) = cohort_spec {
                    rebase(&base, c);
                }
            }
        }
        match &mut cfg.emotion {
            LabelerConfig::Lexicon { path: Some(p) } | LabelerConfig::Precomputed { path: p } => rebase(&base, p),
            LabelerConfig::Lexicon { path: None } => {}
        }
        Ok(cfg)
    }

    /// Checks every stage's settings before anything runs.
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        for m in &self.models {
            m.validate()?;
        }
        let mut kinds: Vec<_> = self.models.iter().map(|m| m.kind().short_name()).collect();
        kinds.sort_unstable();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("each model kind may appear once".into()));
        }
        self.eval.validate()
    }
}

pub const CORPUS_DIR: &str = "corpus";
pub const EMOTION_DIR: &str = "emotion";
pub const FINGERPRINT_DIR: &str = "fingerprint";
pub const EVAL_DIR: &str = "eval";
pub const METRICS_FILE: &str = "metrics.json";
pub const ARTIFACTS_FILE: &str = "artifacts.json";
const STAGE_FILE: &str = ".stage.json";

/// Builds the cohort dataset in `out`. Raw input goes through cohort
/// construction with the cohort seed derived from `seed`.
pub fn corpus_stage(input: &InputConfig, seed_value: u64, out: &Path) -> Result<Vec<PathBuf>> {
    match input {
        InputConfig::Dataset { dir } => {
            let users = corpus::read_dataset(dir)?;
            corpus::write_dataset(out, &users)?;
            Ok(vec![out.join(corpus::MANIFEST_FILE), out.join(corpus::POSTS_FILE)])
        }
        InputConfig::Raw { posts, cohort_spec } => {
            let mut spec = match cohort_spec {
                Some(p) => CohortSpec::load(p)?,
                None => CohortSpec::default(),
            };
            spec.seed = seed::derive_tagged(seed_value, "corpus", &[]);
            spec.validate()?;
            let ingest = corpus::ingest_posts(posts, &spec.fields)?;
            if ingest.malformed > 0 {
                warn!("{} of {} lines in {} were malformed", ingest.malformed, ingest.total_lines, posts.display());
            }
            let cohort = corpus::build_cohort(corpus::group_by_user(ingest.posts), &spec)?;
            corpus::write_cohort(out, &cohort)?;
            Ok(vec![
                out.join(corpus::MANIFEST_FILE),
                out.join(corpus::POSTS_FILE),
                out.join(corpus::DROPS_FILE),
            ])
        }
    }
}

pub fn emotion_stage(dataset_dir: &Path, labeler: &dyn EmotionLabeler, out: &Path) -> Result<Vec<PathBuf>> {
    let users = corpus::read_dataset(dataset_dir)?;
    let labelled = emotion::label_dataset(&users, labeler);
    let sentences = out.join(emotion::SENTENCE_LABELS_FILE);
    let posts = out.join(emotion::POST_EMOTIONS_FILE);
    io::write_jsonl(&sentences, labelled.iter().flat_map(|l| l.sentences.iter()))?;
    io::write_jsonl(&posts, labelled.iter().flat_map(|l| l.posts.iter()))?;
    Ok(vec![posts, sentences])
}

/// Fingerprints in manifest order. Users whose posts were never labelled
/// are an error.
pub fn build_fingerprints(
    manifest: &[ManifestEntry],
    rows: &[PostEmotionRow],
    window: &WindowConfig,
) -> Result<Vec<FingerprintRecord>> {
    let mut by_user: BTreeMap<&str, Vec<&PostEmotionRow>> = BTreeMap::new();
    for r in rows {
        by_user.entry(r.user_id.as_str()).or_default().push(r);
    }
    manifest
        .iter()
        .map(|m| {
            let mut posts = by_user
                .remove(m.user_id.as_str())
                .ok_or_else(|| Error::Invalid(format!("no post emotions for user {}", m.user_id)))?;
            posts.sort_by_key(|p| (p.created_utc, p.post_index));
            let events: Vec<_> = posts.iter().map(|p| (p.created_utc, p.vector())).collect();
            let states = window_states(&events, window)?;
            Ok(FingerprintRecord {
                user_id: m.user_id.clone(),
                label: m.label,
                year_bucket: m.year_bucket,
                features: transition_matrix(&states).flatten(),
            })
        })
        .collect()
}

pub fn fingerprint_stage(dataset_dir: &Path, emotion_dir: &Path, window: &WindowConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let manifest: Vec<ManifestEntry> = io::read_jsonl(&dataset_dir.join(corpus::MANIFEST_FILE))?;
    let rows: Vec<PostEmotionRow> = io::read_jsonl(&emotion_dir.join(emotion::POST_EMOTIONS_FILE))?;
    let records = build_fingerprints(&manifest, &rows, window)?;
    let store = out.join(STORE_FILE);
    let meta = out.join(STORE_META_FILE);
    fingerprint::write_store(&store, &records)?;
    io::write_json(&meta, &StoreMeta::new(*window))?;
    let mut outputs = vec![store, meta];
    outputs.extend(analyze_fingerprints(&records, &out.join("heatmaps"))?);
    Ok(outputs)
}

/// Per-class mean transition heatmaps, with and without the no-act column.
pub fn analyze_fingerprints(records: &[FingerprintRecord], out: &Path) -> Result<Vec<PathBuf>> {
    let mut outputs = Vec::new();
    for (label, m) in fingerprint::class_means(records)? {
        let full = out.join(format!("{label}_mean"));
        report::emit_heatmap(&fingerprint::matrix_to_rows(&m), &format!("{label} mean transitions"), &full)?;
        let active = out.join(format!("{label}_mean_active"));
        report::emit_heatmap(
            &fingerprint::drop_noact_column(&m),
            &format!("{label} mean transitions, no-act column dropped"),
            &active,
        )?;
        for stem in [full, active] {
            outputs.push(stem.with_extension("csv"));
            outputs.push(stem.with_extension("svg"));
        }
    }
    Ok(outputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutResult {
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: MetricsReport,
    pub fpr_full_tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub feature_kind: FeatureKind,
    pub model: String,
    pub holdout: Option<HoldoutResult>,
    pub cv: Option<CvReport>,
    pub temporal: Option<TemporalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub n_control: usize,
    pub n_disorder: usize,
    /// Why the task was not evaluated, if it was not.
    pub skipped: Option<String>,
    /// Keyed `<feature kind>/<model>`, e.g. `er/rf`.
    pub results: BTreeMap<String, ModelResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub seed: u64,
    pub n_users: usize,
    pub tasks: BTreeMap<String, TaskResult>,
}

fn holdout<T: Sync>(
    records: &[Record<T>],
    assignments: &BTreeMap<String, Split>,
    trainer: &dyn Trainer<T>,
    seed_value: u64,
) -> Result<Option<HoldoutResult>> {
    let pick = |s: Split| -> Vec<&Record<T>> { records.iter().filter(|r| assignments.get(&r.id) == Some(&s)).collect() };
    let (train, test) = (pick(Split::Train), pick(Split::Test));
    if test.is_empty() {
        return Ok(None);
    }
    let scores = trainer.fit_predict(&train, &test, seed_value)?;
    let truth: Vec<bool> = test.iter().map(|r| r.label).collect();
    Ok(Some(HoldoutResult {
        n_train: train.len(),
        n_test: test.len(),
        metrics: compute_metrics(&truth, &predict_labels(&scores))?,
        fpr_full_tpr: fpr_at_full_tpr(&truth, &scores)?,
    }))
}

fn evaluate_one<T: Sync>(
    records: &[Record<T>],
    assignments: &BTreeMap<String, Split>,
    trainer: &dyn Trainer<T>,
    plan: &EvalPlan,
    feature_kind: FeatureKind,
    model: &ModelConfig,
    seed_value: u64,
) -> Result<ModelResult> {
    let tag = |t: &str| seed::derive_tagged(seed_value, t, &[]);
    let cv = match plan.cv_folds {
        0 => None,
        k => Some(cross_validate(records, k, trainer, tag("cv"))?),
    };
    let temporal = if plan.temporal_gaps.is_empty() {
        None
    } else {
        Some(temporal_harness(records, trainer, &plan.temporal_gaps, tag("temporal"))?)
    };
    Ok(ModelResult {
        feature_kind,
        model: model.kind().short_name().to_string(),
        holdout: holdout(records, assignments, trainer, tag("holdout"))?,
        cv,
        temporal,
    })
}

/// Runs every configured evaluation. `docs` (user id → concatenated posts)
/// is needed only for the tf-idf baseline.
pub fn evaluate(
    fingerprints: &[FingerprintRecord],
    docs: Option<&BTreeMap<String, String>>,
    models: &[ModelConfig],
    plan: &EvalPlan,
    seed_value: u64,
) -> Result<MetricsFile> {
    let mut tasks = BTreeMap::new();
    for &task in &plan.tasks {
        let members: Vec<&FingerprintRecord> =
            fingerprints.iter().filter(|r| r.label == Label::Control || r.label == task).collect();
        let n_disorder = members.iter().filter(|r| r.label == task).count();
        let n_control = members.len() - n_disorder;
        let mut result = TaskResult {
            n_control,
            n_disorder,
            skipped: None,
            results: BTreeMap::new(),
        };
        if n_control == 0 || n_disorder == 0 {
            warn!("task {task}: one class is empty, skipping");
            result.skipped = Some("one class has no users".into());
            tasks.insert(task.to_string(), result);
            continue;
        }
        let task_seed = seed::derive_tagged(seed_value, "task", &[task.index() as u64]);
        let users: Vec<(String, Label)> = members.iter().map(|r| (r.user_id.clone(), r.label)).collect();
        let plan_splits = make_splits(&users, plan.split_fractions, seed::derive_tagged(task_seed, "splits", &[]))?;
        let er: Vec<Record<Vec<f64>>> = members
            .iter()
            .map(|r| Record {
                id: r.user_id.clone(),
                label: r.label == task,
                year: r.year_bucket,
                data: r.features.clone(),
            })
            .collect();
        for model in models {
            info!("task {task}: er/{}", model.kind());
            let trainer = ErTrainer { model: model.clone() };
            let key = format!("er/{}", model.kind());
            let seed_m = seed::derive_tagged(task_seed, &key, &[]);
            let r = evaluate_one(&er, &plan_splits.assignments, &trainer, plan, FeatureKind::Er, model, seed_m)?;
            result.results.insert(key, r);
        }
        if plan.tfidf_baseline {
            let docs = docs.ok_or_else(|| Error::Invalid("tf-idf baseline needs post text".into()))?;
            let text: Vec<Record<String>> = er
                .iter()
                .map(|r| {
                    Ok(Record {
                        id: r.id.clone(),
                        label: r.label,
                        year: r.year,
                        data: docs
                            .get(&r.id)
                            .cloned()
                            .ok_or_else(|| Error::Invalid(format!("no posts for user {}", r.id)))?,
                    })
                })
                .collect::<Result<_>>()?;
            let model = &plan.tfidf_model;
            info!("task {task}: tfidf/{}", model.kind());
            let trainer = TfidfTrainer {
                tfidf: plan.tfidf.clone(),
                model: model.clone(),
            };
            let key = format!("tfidf/{}", model.kind());
            let seed_m = seed::derive_tagged(task_seed, &key, &[]);
            let r = evaluate_one(&text, &plan_splits.assignments, &trainer, plan, FeatureKind::Tfidf, model, seed_m)?;
            result.results.insert(key, r);
        }
        tasks.insert(task.to_string(), result);
    }
    Ok(MetricsFile {
        seed: seed_value,
        n_users: fingerprints.len(),
        tasks,
    })
}

/// User id → all post bodies joined by newlines.
pub fn user_documents(users: &[UserTimeline]) -> BTreeMap<String, String> {
    users
        .iter()
        .map(|u| (u.user_id.clone(), u.posts.iter().map(|p| p.body.as_str()).collect::<Vec<_>>().join("\n")))
        .collect()
}

pub fn eval_stage(
    fingerprint_dir: &Path,
    dataset_dir: &Path,
    models: &[ModelConfig],
    plan: &EvalPlan,
    seed_value: u64,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let records = fingerprint::read_store(&fingerprint_dir.join(STORE_FILE))?;
    let docs = if plan.tfidf_baseline {
        Some(user_documents(&corpus::read_dataset(dataset_dir)?))
    } else {
        None
    };
    let metrics = evaluate(&records, docs.as_ref(), models, plan, seed_value)?;
    let path = out.join(METRICS_FILE);
    io::write_json(&path, &metrics)?;
    let mut outputs = vec![path];
    for (task, result) in &metrics.tasks {
        let series: Vec<GapSeries> = result
            .results
            .iter()
            .filter_map(|(k, r)| r.temporal.as_ref().map(|t| GapSeries::from_report(&k.replace('/', "-"), t)))
            .filter(|s| !s.points.is_empty())
            .collect();
        if series.is_empty() {
            continue;
        }
        let stem = out.join(format!("gap_curve_{task}"));
        report::emit_gap_curve(&series, &format!("{task}: accuracy by train/test year gap"), &stem)?;
        outputs.push(stem.with_extension("csv"));
        outputs.push(stem.with_extension("svg"));
    }
    Ok(outputs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StageRecord {
    stage: String,
    key: String,
    /// Output path relative to the run directory → sha256.
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: String,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub stage: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub stages: Vec<StageOutcome>,
    pub artifacts: Vec<ArtifactEntry>,
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn stage_key(name: &str, config: &serde_json::Value, inputs: &[PathBuf]) -> Result<String> {
    let mut text = format!("{name}\n{}\n{}\n", env!("CARGO_PKG_VERSION"), config);
    for p in inputs {
        let file = p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        text.push_str(&format!("{file} {}\n", io::sha256_file(p)?));
    }
    Ok(io::sha256_bytes(text.as_bytes()))
}

fn cached_record(root: &Path, dir: &Path, key: &str) -> Option<StageRecord> {
    let rec: StageRecord = serde_json::from_str(&std::fs::read_to_string(dir.join(STAGE_FILE)).ok()?).ok()?;
    if rec.key != key {
        return None;
    }
    for (rel, hash) in &rec.outputs {
        if io::sha256_file(&root.join(rel)).ok()? != *hash {
            return None;
        }
    }
    Some(rec)
}

fn run_stage(
    root: &Path,
    name: &str,
    config: serde_json::Value,
    inputs: &[PathBuf],
    body: impl FnOnce(&Path) -> Result<Vec<PathBuf>>,
) -> Result<(StageRecord, bool)> {
    let wrap = |e: Error| Error::Stage {
        stage: name.to_string(),
        source: Box::new(e),
    };
    let dir = root.join(name);
    let key = stage_key(name, &config, inputs).map_err(wrap)?;
    if let Some(rec) = cached_record(root, &dir, &key) {
        info!("stage {name}: cached");
        return Ok((rec, true));
    }
    info!("stage {name}: running");
    std::fs::create_dir_all(&dir).map_err(|e| wrap(Error::io(&dir, e)))?;
    let outputs = body(&dir).map_err(wrap)?;
    let mut hashes = BTreeMap::new();
    for p in &outputs {
        hashes.insert(relative(root, p), io::sha256_file(p).map_err(wrap)?);
    }
    let rec = StageRecord {
        stage: name.to_string(),
        key,
        outputs: hashes,
    };
    io::write_json(&dir.join(STAGE_FILE), &rec).map_err(wrap)?;
    Ok((rec, false))
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config types serialize")
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let root = cfg.out_dir.as_path();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut stages = Vec::new();
    let mut records = Vec::new();

    let corpus_inputs = match &cfg.input {
        InputConfig::Dataset { dir } => vec![dir.join(corpus::MANIFEST_FILE), dir.join(corpus::POSTS_FILE)],
        InputConfig::Raw { posts, cohort_spec } => std::iter::once(posts.clone()).chain(cohort_spec.clone()).collect(),
    };
    let corpus_seed = seed::derive_tagged(cfg.seed, "corpus", &[]);
    let corpus_cfg = match &cfg.input {
        InputConfig::Dataset { .. } => json!({"source": "dataset"}),
        InputConfig::Raw { .. } => json!({"source": "raw", "seed": corpus_seed}),
    };
    let (rec, cached) = run_stage(root, CORPUS_DIR, corpus_cfg, &corpus_inputs, |out| {
        corpus_stage(&cfg.input, cfg.seed, out)
    })?;
    stages.push(StageOutcome { stage: rec.stage.clone(), cached });
    records.push(rec);

    let dataset = root.join(CORPUS_DIR);
    let dataset_files = vec![dataset.join(corpus::MANIFEST_FILE), dataset.join(corpus::POSTS_FILE)];
    let mut emotion_inputs = dataset_files.clone();
    let labeler_cfg = match &cfg.emotion {
        LabelerConfig::Lexicon { path } => {
            emotion_inputs.extend(path.clone());
            json!({"labeler": "lexicon", "custom": path.is_some()})
        }
        LabelerConfig::Precomputed { path } => {
            emotion_inputs.push(path.clone());
            json!({"labeler": "precomputed"})
        }
    };
    let (rec, cached) = run_stage(root, EMOTION_DIR, labeler_cfg, &emotion_inputs, |out| {
        let labeler = cfg.emotion.build()?;
        let outputs = emotion_stage(&dataset, labeler.as_ref(), out)?;
        Ok(outputs)
    })?;
    stages.push(StageOutcome { stage: rec.stage.clone(), cached });
    records.push(rec);

    let emotion_dir = root.join(EMOTION_DIR);
    let fp_inputs = vec![dataset.join(corpus::MANIFEST_FILE), emotion_dir.join(emotion::POST_EMOTIONS_FILE)];
    let (rec, cached) = run_stage(root, FINGERPRINT_DIR, to_value(&cfg.window), &fp_inputs, |out| {
        fingerprint_stage(&dataset, &emotion_dir, &cfg.window, out)
    })?;
    stages.push(StageOutcome { stage: rec.stage.clone(), cached });
    records.push(rec);

    let fp_dir = root.join(FINGERPRINT_DIR);
    let mut eval_inputs = vec![fp_dir.join(STORE_FILE)];
    if cfg.eval.tfidf_baseline {
        eval_inputs.extend(dataset_files);
    }
    let eval_cfg = json!({
        "seed": cfg.seed,
        "models": to_value(&cfg.models),
        "plan": to_value(&cfg.eval),
    });
    let (rec, cached) = run_stage(root, EVAL_DIR, eval_cfg, &eval_inputs, |out| {
        eval_stage(&fp_dir, &dataset, &cfg.models, &cfg.eval, seed::derive_tagged(cfg.seed, "eval", &[]), out)
    })?;
    stages.push(StageOutcome { stage: rec.stage.clone(), cached });
    records.push(rec);

    let artifacts: Vec<ArtifactEntry> = records
        .iter()
        .flat_map(|r| {
            r.outputs.iter().map(|(path, sha256)| ArtifactEntry {
                path: path.clone(),
                stage: r.stage.clone(),
                sha256: sha256.clone(),
            })
        })
        .collect();
    io::write_json(&root.join(ARTIFACTS_FILE), &artifacts)?;
    Ok(RunSummary {
        out_dir: cfg.out_dir.clone(),
        stages,
        artifacts,
    })
}

/// Reads `metrics.json` of a finished run.
pub fn read_metrics(out_dir: &Path) -> Result<MetricsFile> {
    let text = io::read_to_string(&out_dir.join(EVAL_DIR).join(METRICS_FILE))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(METRICS_FILE, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ForestParams;
    use crate::synth::{build_synthetic_cohort, write_synthetic, GeneratorSpec};

    fn small_run(dir: &Path) -> PipelineConfig {
        let spec = GeneratorSpec {
            users_per_class: 12,
            windows_per_user: 80,
            start_year: 2014,
            end_year: 2016,
            ..GeneratorSpec::default()
        };
        let data = dir.join("data");
        write_synthetic(&data, &build_synthetic_cohort(&spec).unwrap(), &spec, true).unwrap();
        PipelineConfig {
            seed: 5,
            out_dir: dir.join("run"),
            input: InputConfig::Dataset { dir: data },
            emotion: LabelerConfig::default(),
            window: WindowConfig::default(),
            models: vec![ModelConfig::Rf(ForestParams {
                n_trees: 20,
                ..ForestParams::default()
            })],
            eval: EvalPlan {
                tasks: vec![Label::Bd],
                cv_folds: 3,
                temporal_gaps: vec![1, 2],
                ..EvalPlan::default()
            },
        }
    }

    #[test]
    fn config_parses_and_rejects_unknown_model() {
        let toml_text = r#"
            seed = 3
            out_dir = "out"
            [input]
            source = "dataset"
            dir = "data"
            [[models]]
            kind = "rf"
            n_trees = 10
            [[models]]
            kind = "logistic"
            l2 = 0.01
            [eval]
            cv_folds = 0
            temporal_gaps = []
        "#;
        let cfg: PipelineConfig = toml::from_str(toml_text).unwrap();
        assert_eq!(cfg.models.len(), 2);
        assert_eq!(cfg.models[0].kind().short_name(), "rf");
        cfg.validate().unwrap();
        let bad = toml_text.replace("kind = \"logistic\"", "kind = \"boosting\"");
        assert!(toml::from_str::<PipelineConfig>(&bad).is_err());
        let dup = toml_text.replace("kind = \"logistic\"\n            l2 = 0.01", "kind = \"rf\"");
        let cfg: PipelineConfig = toml::from_str(&dup).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn run_then_rerun_hits_cache() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small_run(tmp.path());
        let first = run_pipeline(&cfg).unwrap();
        assert!(first.stages.iter().all(|s| !s.cached));
        let metrics = read_metrics(&cfg.out_dir).unwrap();
        let bd = &metrics.tasks["bd"];
        assert_eq!((bd.n_control, bd.n_disorder), (12, 12));
        let er = &bd.results["er/rf"];
        assert!(er.holdout.is_some() && er.cv.is_some() && er.temporal.is_some());
        assert!(bd.results.contains_key("tfidf/rf"));
        assert!(cfg.out_dir.join("eval/gap_curve_bd.svg").exists());
        assert!(cfg.out_dir.join("fingerprint/heatmaps/control_mean.csv").exists());

        let second = run_pipeline(&cfg).unwrap();
        assert!(second.stages.iter().all(|s| s.cached));
        assert_eq!(first.artifacts, second.artifacts);

        // a changed window invalidates fingerprint and eval only
        let mut changed = cfg.clone();
        changed.window = WindowConfig {
            window_seconds: 3600,
            step_seconds: 3600,
        };
        let third = run_pipeline(&changed).unwrap();
        let cached: Vec<bool> = third.stages.iter().map(|s| s.cached).collect();
        assert_eq!(cached, vec![true, true, false, false]);
    }

    #[test]
    fn raw_input_rebuilds_same_cohort() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small_run(tmp.path());
        let data = tmp.path().join("data");
        cfg.input = InputConfig::Raw {
            posts: data.join(crate::synth::RAW_POSTS_FILE),
            cohort_spec: Some(data.join(crate::synth::COHORT_SPEC_FILE)),
        };
        cfg.eval.tfidf_baseline = false;
        cfg.eval.temporal_gaps.clear();
        run_pipeline(&cfg).unwrap();
        let rebuilt = corpus::read_dataset(&cfg.out_dir.join(CORPUS_DIR)).unwrap();
        let original = corpus::read_dataset(&data).unwrap();
        let ids = |u: &[UserTimeline]| {
            let mut v: Vec<(String, Label, usize)> = u.iter().map(|t| (t.user_id.clone(), t.label, t.posts.len())).collect();
            v.sort();
            v
        };
        assert_eq!(ids(&rebuilt), ids(&original));
    }

    #[test]
    fn stage_failure_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small_run(tmp.path());
        cfg.input = InputConfig::Dataset {
            dir: tmp.path().join("missing"),
        };
        match run_pipeline(&cfg) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, CORPUS_DIR),
            other => panic!("expected stage error, got {other:?}"),
        }
    }
}
