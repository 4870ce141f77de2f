use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use emofp::corpus::{self, CohortSpec, FieldMapping, Label};
use emofp::emotion::{self, Lexicon, LexiconLabeler};
use emofp::eval::{fpr_at_full_tpr, temporal_harness, welch_ttest, Record};
use emofp::fingerprint::{self, WindowConfig};
use emofp::io;
use emofp::models::{self, ErTrainer, FeatureKind, FeatureMatrix, ModelConfig, ModelKind};
use emofp::pipeline::{self, EvalPlan, PipelineConfig};
use emofp::report::{self, GapSeries};
use emofp::synth::{self, GeneratorSpec};
use emofp::{Error, Result};

/// Emotion-transition fingerprints for detecting emotional disorders from
/// timestamped posts.
#[derive(Debug, Parser)]
#[command(name = "emofp", version)]
struct Cli {
    /// Settings file for the subcommand (TOML or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the settings file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log progress (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a labelled cohort from a raw post archive.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Label sentences and posts with emotions.
    #[command(subcommand)]
    Emotion(EmotionCmd),
    /// Build or summarize transition fingerprints.
    #[command(subcommand)]
    Fingerprint(FingerprintCmd),
    /// Train a classifier on fingerprints.
    #[command(subcommand)]
    Model(ModelCmd),
    /// Evaluation: full plan, temporal gaps, screening FPR, Welch's test.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Generate synthetic cohorts.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Run every stage from one config.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Debug, Subcommand)]
enum CorpusCmd {
    /// `--config` holds the cohort spec.
    Build {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Read pushshift field names (`author` for the user id).
        #[arg(long)]
        pushshift: bool,
    },
}

#[derive(Debug, Subcommand)]
enum EmotionCmd {
    Label {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Lexicon CSV (`emotion,word`) replacing the bundled one.
        #[arg(long, conflicts_with = "labels")]
        lexicon: Option<PathBuf>,
        /// Precomputed sentence labels (JSONL) instead of the lexicon.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct WindowArgs {
    #[arg(long, default_value_t = 1800)]
    window: i64,
    #[arg(long, default_value_t = 1800)]
    step: i64,
}

#[derive(Debug, Subcommand)]
enum FingerprintCmd {
    Build {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory with `post_emotions.jsonl`.
        #[arg(long)]
        emotions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Per-class mean heatmaps (CSV + SVG).
    Analyze {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum ModelCmd {
    /// Fit on every user of a control-vs-disorder task. `--config` may hold
    /// the model settings (`kind = ...` plus hyperparameters).
    Train {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        task: Label,
        #[arg(long, default_value = "rf")]
        model: ModelKind,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum EvalCmd {
    /// Held-out, cross-validation and temporal evaluation. `--config` holds
    /// `models` and `eval` tables as in the pipeline config.
    Run {
        #[arg(long)]
        store: PathBuf,
        /// Dataset directory, needed for the tf-idf baseline.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy by train/test year gap on fingerprint features.
    Temporal {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        task: Label,
        #[arg(long, default_value = "rf")]
        model: ModelKind,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7")]
        gaps: Vec<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// False positive rate at the threshold that keeps every positive.
    /// Reads a CSV with header `label,score`.
    Fpr {
        #[arg(long)]
        scores: PathBuf,
    },
    /// Welch's t-test between two comma-separated samples.
    Ttest {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        a: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        b: Vec<f64>,
    },
}

#[derive(Debug, Subcommand)]
enum SynthCmd {
    /// `--spec` (or `--config`) holds the generator spec; defaults otherwise.
    Generate {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write a raw archive with self-report posts and a cohort spec.
        #[arg(long)]
        raw: bool,
    },
}

#[derive(Debug, Subcommand)]
enum PipelineCmd {
    /// Needs `--config`.
    Run,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalSettings {
    seed: u64,
    models: Option<Vec<ModelConfig>>,
    eval: EvalPlan,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Invalid(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn require_config(config: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    config
        .clone()
        .ok_or_else(|| Error::Config(format!("{what} needs --config <file>")))
}

fn task_records(store: &Path, task: Label) -> Result<Vec<Record<Vec<f64>>>> {
    if task == Label::Control {
        return Err(Error::Config("task must be a disorder (bd, mdd or ad)".into()));
    }
    Ok(fingerprint::read_store(store)?
        .into_iter()
        .filter(|r| r.label == Label::Control || r.label == task)
        .map(|r| Record {
            id: r.user_id,
            label: r.label == task,
            year: r.year_bucket,
            data: r.features,
        })
        .collect())
}

fn read_scores(path: &Path) -> Result<(Vec<bool>, Vec<f64>)> {
    let text = io::read_to_string(path)?;
    let ctx = path.display().to_string();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("label,score") {
        return Err(Error::Config(format!("{ctx}: expected header `label,score`")));
    }
    let (mut labels, mut scores) = (Vec::new(), Vec::new());
    for line in lines {
        let (l, s) = line
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("{ctx}: bad line `{line}`")))?;
        labels.push(match l.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::Config(format!("{ctx}: bad label `{other}`"))),
        });
        scores.push(
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{ctx}: bad score `{s}`")))?,
        );
    }
    Ok((labels, scores))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Corpus(CorpusCmd::Build { posts, out, pushshift }) => {
            let mut spec = match &cli.config {
                Some(p) => CohortSpec::load(p)?,
                None => CohortSpec::default(),
            };
            if pushshift {
                spec.fields = FieldMapping::pushshift();
            }
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            spec.validate()?;
            let ingest = corpus::ingest_posts(&posts, &spec.fields)?;
            let cohort = corpus::build_cohort(corpus::group_by_user(ingest.posts), &spec)?;
            corpus::write_cohort(&out, &cohort)?;
            print_json(&cohort.drops)
        }
        Command::Emotion(EmotionCmd::Label {
            dataset,
            out,
            lexicon,
            labels,
        }) => {
            let labeler: Box<dyn emotion::EmotionLabeler> = match (lexicon, labels) {
                (_, Some(l)) => Box::new(emotion::load_precomputed_labels(&l)?),
                (Some(p), None) => Box::new(LexiconLabeler::new(Lexicon::load(&p)?)),
                (None, None) => Box::new(LexiconLabeler::default()),
            };
            let outputs = pipeline::emotion_stage(&dataset, labeler.as_ref(), &out)?;
            info!("wrote {}", outputs.len());
            Ok(())
        }
        Command::Fingerprint(FingerprintCmd::Build {
            dataset,
            emotions,
            out,
            window,
        }) => {
            let window = WindowConfig {
                window_seconds: window.window,
                step_seconds: window.step,
            };
            window.validate()?;
            pipeline::fingerprint_stage(&dataset, &emotions, &window, &out)?;
            Ok(())
        }
        Command::Fingerprint(FingerprintCmd::Analyze { store, out }) => {
            let records = fingerprint::read_store(&store)?;
            for p in pipeline::analyze_fingerprints(&records, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Model(ModelCmd::Train {
            store,
            task,
            model,
            out,
        }) => {
            let config = match &cli.config {
                Some(p) => io::read_config::<ModelConfig>(p)?,
                None => ModelConfig::default_for(model),
            };
            let records = task_records(&store, task)?;
            let data = FeatureMatrix::new(
                records.iter().map(|r| r.data.clone()).collect(),
                records.iter().map(|r| r.label).collect(),
                records.iter().map(|r| r.id.clone()).collect(),
            )?;
            let trained = models::train(&config, &data, FeatureKind::Er, cli.seed.unwrap_or(0))?;
            trained.save(&out)
        }
        Command::Eval(EvalCmd::Run { store, dataset, out }) => {
            let mut settings: EvalSettings = match &cli.config {
                Some(p) => io::read_config(p)?,
                None => EvalSettings::default(),
            };
            if let Some(s) = cli.seed {
                settings.seed = s;
            }
            let models = settings.models.unwrap_or_else(|| vec![ModelConfig::default()]);
            settings.eval.validate()?;
            for m in &models {
                m.validate()?;
            }
            let dataset = match dataset {
                Some(d) => d,
                None if settings.eval.tfidf_baseline => {
                    return Err(Error::Config("the tf-idf baseline needs --dataset (or set eval.tfidf_baseline = false)".into()))
                }
                None => PathBuf::new(),
            };
            let fp_dir = store.parent().unwrap_or(Path::new(".")).to_path_buf();
            if store.file_name().and_then(|f| f.to_str()) != Some(fingerprint::STORE_FILE) {
                return Err(Error::Config(format!("--store must point to a {} file", fingerprint::STORE_FILE)));
            }
            pipeline::eval_stage(&fp_dir, &dataset, &models, &settings.eval, settings.seed, &out)?;
            let metrics: pipeline::MetricsFile = serde_json::from_str(&io::read_to_string(&out.join(pipeline::METRICS_FILE))?)
                .map_err(|e| Error::Invalid(e.to_string()))?;
            let summary: BTreeMap<String, BTreeMap<String, Option<f64>>> = metrics
                .tasks
                .iter()
                .map(|(t, r)| {
                    (
                        t.clone(),
                        r.results
                            .iter()
                            .map(|(k, m)| (k.clone(), m.holdout.as_ref().map(|h| h.metrics.accuracy)))
                            .collect(),
                    )
                })
                .collect();
            print_json(&summary)
        }
        Command::Eval(EvalCmd::Temporal {
            store,
            task,
            model,
            gaps,
            out,
        }) => {
            let config = match &cli.config {
                Some(p) => io::read_config::<ModelConfig>(p)?,
                None => ModelConfig::default_for(model),
            };
            config.validate()?;
            let records = task_records(&store, task)?;
            let trainer = ErTrainer { model: config };
            let rep = temporal_harness(&records, &trainer, &gaps, cli.seed.unwrap_or(0))?;
            io::write_json(&out.join("temporal.json"), &rep)?;
            let series = GapSeries::from_report(&format!("er-{model}"), &rep);
            if !series.points.is_empty() {
                report::emit_gap_curve(&[series], &format!("{task}: accuracy by year gap"), &out.join("gap_curve"))?;
            }
            print_json(&serde_json::json!({
                "gaps": rep.gaps.iter().map(|g| (g.gap, g.mean_accuracy, g.stderr, g.n_experiments)).collect::<Vec<_>>(),
                "missing_gaps": rep.missing_gaps,
                "delta": rep.delta,
                "ttest": rep.ttest,
            }))
        }
        Command::Eval(EvalCmd::Fpr { scores }) => {
            let (labels, scores) = read_scores(&scores)?;
            let fpr = fpr_at_full_tpr(&labels, &scores).map_err(|e| Error::Config(e.to_string()))?;
            print_json(&serde_json::json!({ "fpr_at_full_tpr": fpr }))
        }
        Command::Eval(EvalCmd::Ttest { a, b }) => {
            print_json(&welch_ttest(&a, &b).map_err(|e| Error::Config(e.to_string()))?)
        }
        Command::Synth(SynthCmd::Generate { spec, out, raw }) => {
            let mut generator = match spec.or(cli.config) {
                Some(p) => GeneratorSpec::load(&p)?,
                None => GeneratorSpec::default(),
            };
            if let Some(s) = cli.seed {
                generator.seed = s;
            }
            let cohort = synth::build_synthetic_cohort(&generator)?;
            synth::write_synthetic(&out, &cohort, &generator, raw)?;
            print_json(&serde_json::json!({ "users": cohort.users.len(), "out": out }))
        }
        Command::Pipeline(PipelineCmd::Run) => {
            let mut cfg = PipelineConfig::load(&require_config(&cli.config, "pipeline run")?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let summary = pipeline::run_pipeline(&cfg)?;
            print_json(&summary.stages)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // messages already embed their causes
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
