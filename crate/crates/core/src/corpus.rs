//! Post ingestion and distant-supervision cohort construction.
//!
//! Disorder users are found by literal self-report templates ("I was
//! diagnosed with anxiety", ...), truncated to the posts that precede their
//! first report, and dropped when they report more than one disorder. Control
//! users must have posted in at least one of the disorder cohort's most used
//! subreddits, never in a disorder-specific subreddit, and never self-report.
//! Posts outside the configured year range are removed and the classes are
//! downsampled to the smallest class with a seeded shuffle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::io;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub user_id: String,
    pub created_utc: i64,
    #[serde(default)]
    pub subreddit: String,
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Control,
    Bd,
    Mdd,
    Ad,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Control, Label::Bd, Label::Mdd, Label::Ad];
    pub const DISORDERS: [Label; 3] = [Label::Bd, Label::Mdd, Label::Ad];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Control => "control",
            Label::Bd => "bd",
            Label::Mdd => "mdd",
            Label::Ad => "ad",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Condition keyword used in the default self-report templates.
    fn keyword(self) -> Option<&'static str> {
        match self {
            Label::Control => None,
            Label::Bd => Some("bipolar"),
            Label::Mdd => Some("depression"),
            Label::Ad => Some("anxiety"),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "control" => Ok(Label::Control),
            "bd" | "bipolar" => Ok(Label::Bd),
            "mdd" | "depression" => Ok(Label::Mdd),
            "ad" | "anxiety" => Ok(Label::Ad),
            other => Err(Error::Invalid(format!("unknown label `{other}`"))),
        }
    }
}

/// A user's posts, sorted ascending by `created_utc`, with a cohort label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserTimeline {
    pub user_id: String,
    pub posts: Vec<Post>,
    pub label: Label,
    pub report_utc: Option<i64>,
}

/// Unlabelled per-user history, the input of [`build_cohort`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub user_id: String,
    pub posts: Vec<Post>,
}

/// JSON field names used when reading a post archive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldMapping {
    pub user_id: String,
    pub created_utc: String,
    pub subreddit: String,
    pub body: String,
}

impl Default for FieldMapping {
    fn default() -> Self {
        Self {
            user_id: "user_id".into(),
            created_utc: "created_utc".into(),
            subreddit: "subreddit".into(),
            body: "body".into(),
        }
    }
}

impl FieldMapping {
    /// Field names of pushshift comment dumps.
    pub fn pushshift() -> Self {
        Self {
            user_id: "author".into(),
            ..Self::default()
        }
    }
}

const REPORT_PREFIXES: [&str; 5] = [
    "i am diagnosed",
    "i have been diagnosed",
    "i was diagnosed",
    "i'm diagnosed",
    "i was just diagnosed",
];

const TOP_SUBREDDITS: [&str; 20] = [
    "TranscribersOfReddit",
    "TalkativePeople",
    "AskReddit",
    "longtail",
    "Nudelete",
    "politics",
    "teenagers",
    "PUBGvideos",
    "news",
    "AMAAggregator",
    "relationships",
    "funny",
    "unpopularopinion",
    "worldnews",
    "todayilearned",
    "SquaredCircle",
    "bipolar",
    "AmItheAsshole",
    "pics",
    "nfl",
];

const EXCLUSION_SUBREDDITS: [&str; 10] = [
    "mentalhealth",
    "bipolar",
    "bipolar2",
    "BipolarReddit",
    "BipolarSOs",
    "bipolarart",
    "depression",
    "Anxiety",
    "Anxietyhelp",
    "socialanxiety",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub disorder_patterns: BTreeMap<Label, Vec<String>>,
    pub control_top_subreddits: Vec<String>,
    pub exclusion_subreddits: Vec<String>,
    /// Inclusive calendar-year range (UTC) of retained posts.
    pub time_range: [i32; 2],
    pub seed: u64,
    pub fields: FieldMapping,
}

impl Default for CohortSpec {
    fn default() -> Self {
        let disorder_patterns = Label::DISORDERS
            .iter()
            .map(|&label| {
                let keyword = label.keyword().expect("disorder keyword");
                let patterns = REPORT_PREFIXES
                    .iter()
                    .map(|p| format!("{p} with {keyword}"))
                    .collect();
                (label, patterns)
            })
            .collect();
        Self {
            disorder_patterns,
            control_top_subreddits: TOP_SUBREDDITS.iter().map(|s| s.to_string()).collect(),
            exclusion_subreddits: EXCLUSION_SUBREDDITS.iter().map(|s| s.to_string()).collect(),
            time_range: [2011, 2019],
            seed: 0,
            fields: FieldMapping::default(),
        }
    }
}

impl CohortSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let spec: CohortSpec = io::read_config(path)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.disorder_patterns.contains_key(&Label::Control) {
            return Err(Error::Config("control cannot carry self-report patterns".into()));
        }
        for label in Label::DISORDERS {
            match self.disorder_patterns.get(&label) {
                Some(p) if !p.is_empty() && p.iter().all(|s| !s.trim().is_empty()) => {}
                _ => {
                    return Err(Error::Config(format!(
                        "disorder `{label}` needs a non-empty pattern list"
                    )))
                }
            }
        }
        if self.control_top_subreddits.is_empty() {
            return Err(Error::Config("control_top_subreddits is empty".into()));
        }
        if self.time_range[0] > self.time_range[1] {
            return Err(Error::Config(format!(
                "time_range {:?} is reversed",
                self.time_range
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub posts: Vec<Post>,
    pub malformed: usize,
    pub total_lines: usize,
}

fn field_str(obj: &serde_json::Map<String, Value>, name: &str) -> std::result::Result<String, String> {
    match obj.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Null) | None => Err(format!("missing `{name}`")),
        Some(_) => Err(format!("`{name}` is not a string")),
    }
}

fn field_utc(obj: &serde_json::Map<String, Value>, name: &str) -> std::result::Result<i64, String> {
    let ts = match obj.get(name) {
        Some(Value::Number(n)) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64)),
        Some(Value::String(s)) => s.trim().parse::<i64>().ok(),
        _ => return Err(format!("missing `{name}`")),
    };
    match ts {
        Some(t) if t > 0 => Ok(t),
        Some(t) => Err(format!("`{name}` must be positive, got {t}")),
        None => Err(format!("`{name}` is not an integer timestamp")),
    }
}

fn parse_post(line: &str, fields: &FieldMapping) -> std::result::Result<Post, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("line is not a JSON object")?;
    let user_id = field_str(obj, &fields.user_id)?;
    if user_id.is_empty() {
        return Err(format!("`{}` is empty", fields.user_id));
    }
    let created_utc = field_utc(obj, &fields.created_utc)?;
    let subreddit = match obj.get(&fields.subreddit) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(_) => return Err(format!("`{}` is not a string", fields.subreddit)),
    };
    let body = field_str(obj, &fields.body)?;
    Ok(Post {
        user_id,
        created_utc,
        subreddit,
        body,
    })
}

/// Reads a JSONL post archive, skipping (and counting) malformed lines.
///
/// Blank lines are ignored. More than half of the non-blank lines being
/// malformed is treated as a wrong file or a wrong field mapping.
pub fn ingest_posts(path: &Path, fields: &FieldMapping) -> Result<IngestReport> {
    let reader = io::open(path)?;
    let mut report = IngestReport::default();
    let mut diagnostics = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.total_lines += 1;
        match parse_post(&line, fields) {
            Ok(post) => report.posts.push(post),
            Err(why) => {
                report.malformed += 1;
                if diagnostics.len() < 5 {
                    diagnostics.push(format!("line {}: {why}", i + 1));
                }
            }
        }
    }
    if report.total_lines == 0 {
        log::warn!("{}: no posts found", path.display());
    } else if report.malformed * 2 > report.total_lines {
        return Err(Error::TooManyMalformed {
            path: path.to_path_buf(),
            malformed: report.malformed,
            total: report.total_lines,
            diagnostics: diagnostics.join("; "),
        });
    } else if report.malformed > 0 {
        log::warn!(
            "{}: skipped {} malformed line(s): {}",
            path.display(),
            report.malformed,
            diagnostics.join("; ")
        );
    }
    Ok(report)
}

/// Groups posts per user; users come out sorted by id, posts by time.
pub fn group_by_user(posts: Vec<Post>) -> Vec<UserHistory> {
    let mut map: BTreeMap<String, Vec<Post>> = BTreeMap::new();
    for post in posts {
        map.entry(post.user_id.clone()).or_default().push(post);
    }
    map.into_iter()
        .map(|(user_id, mut posts)| {
            posts.sort_by_key(|p| p.created_utc);
            UserHistory { user_id, posts }
        })
        .collect()
}

/// Lowercases, maps typographic apostrophes to ASCII and collapses runs of
/// whitespace to one space.
pub fn normalize_text(text: &str) -> String {
    let lowered = text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelfReport {
    /// Every disorder matched anywhere in the history.
    pub disorders: BTreeSet<Label>,
    /// Disorder and timestamp of the earliest matching post.
    pub earliest: Option<(Label, i64)>,
}

struct CompiledPatterns(Vec<(Label, Vec<String>)>);

impl CompiledPatterns {
    fn new(spec: &CohortSpec) -> Self {
        Self(
            spec.disorder_patterns
                .iter()
                .map(|(l, ps)| (*l, ps.iter().map(|p| normalize_text(p)).collect()))
                .collect(),
        )
    }

    fn matches(&self, body: &str) -> impl Iterator<Item = Label> + '_ {
        let norm = normalize_text(body);
        self.0
            .iter()
            .filter(move |(_, ps)| ps.iter().any(|p| norm.contains(p.as_str())))
            .map(|(l, _)| *l)
            .collect::<Vec<_>>()
            .into_iter()
    }
}

fn detect_in_posts(posts: &[Post], patterns: &CompiledPatterns) -> SelfReport {
    let mut report = SelfReport::default();
    for post in posts {
        for label in patterns.matches(&post.body) {
            report.disorders.insert(label);
            let earlier = report.earliest.is_none_or(|(_, t)| post.created_utc < t);
            if earlier {
                report.earliest = Some((label, post.created_utc));
            }
        }
    }
    report
}

/// Searches a history for self-report templates (case-insensitive substring
/// over whitespace-normalized text). Posts are expected in time order.
pub fn detect_self_report(posts: &[Post], spec: &CohortSpec) -> SelfReport {
    detect_in_posts(posts, &CompiledPatterns::new(spec))
}

/// Calendar year (UTC) of a timestamp.
pub fn utc_year(ts: i64) -> i32 {
    DateTime::from_timestamp(ts, 0)
        .map(|d| d.year())
        .unwrap_or(1970)
}

/// UTC year of the timeline's last post; `None` for an empty timeline.
pub fn year_bucket(posts: &[Post]) -> Option<i32> {
    posts.iter().map(|p| p.created_utc).max().map(utc_year)
}

/// Per-rule drop counts produced by [`build_cohort`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub input_users: usize,
    pub multi_disorder: usize,
    pub no_posts_before_report: usize,
    pub control_not_in_top_subreddits: usize,
    pub control_in_exclusion_subreddits: usize,
    pub empty_after_time_prune: usize,
    pub downsampled: usize,
    pub eligible_per_class: BTreeMap<Label, usize>,
    pub final_per_class: BTreeMap<Label, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortDataset {
    /// Sorted by (label, user_id).
    pub users: Vec<UserTimeline>,
    pub drops: DropCounts,
}

enum Outcome {
    Keep(UserTimeline),
    MultiDisorder,
    NoPostsBeforeReport,
    NotInTopSubreddits,
    InExclusionSubreddits,
    EmptyAfterTimePrune,
}

fn subreddit_set(names: &[String]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_lowercase()).collect()
}

fn classify_user(
    user: UserHistory,
    spec: &CohortSpec,
    patterns: &CompiledPatterns,
    top: &BTreeSet<String>,
    excluded: &BTreeSet<String>,
) -> Outcome {
    let UserHistory { user_id, mut posts } = user;
    posts.sort_by_key(|p| p.created_utc);
    let report = detect_in_posts(&posts, patterns);
    let (label, report_utc) = match report.disorders.len() {
        0 => {
            let in_sub = |set: &BTreeSet<String>| {
                posts
                    .iter()
                    .any(|p| set.contains(&p.subreddit.to_lowercase()))
            };
            if in_sub(excluded) {
                return Outcome::InExclusionSubreddits;
            }
            if !in_sub(top) {
                return Outcome::NotInTopSubreddits;
            }
            (Label::Control, None)
        }
        1 => {
            let (label, ts) = report.earliest.expect("earliest set when a disorder matched");
            posts.retain(|p| p.created_utc < ts);
            if posts.is_empty() {
                return Outcome::NoPostsBeforeReport;
            }
            (label, Some(ts))
        }
        _ => return Outcome::MultiDisorder,
    };
    let [lo, hi] = spec.time_range;
    posts.retain(|p| (lo..=hi).contains(&utc_year(p.created_utc)));
    if posts.is_empty() {
        return Outcome::EmptyAfterTimePrune;
    }
    Outcome::Keep(UserTimeline {
        user_id,
        posts,
        label,
        report_utc,
    })
}

/// Applies the labelling, pruning and balancing rules to every user.
pub fn build_cohort(users: Vec<UserHistory>, spec: &CohortSpec) -> Result<CohortDataset> {
    spec.validate()?;
    let patterns = CompiledPatterns::new(spec);
    let top = subreddit_set(&spec.control_top_subreddits);
    let excluded = subreddit_set(&spec.exclusion_subreddits);

    let mut users = users;
    users.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    let mut drops = DropCounts {
        input_users: users.len(),
        ..DropCounts::default()
    };
    let outcomes: Vec<Outcome> = users
        .into_par_iter()
        .map(|u| classify_user(u, spec, &patterns, &top, &excluded))
        .collect();

    let mut by_class: BTreeMap<Label, Vec<UserTimeline>> =
        Label::ALL.iter().map(|&l| (l, Vec::new())).collect();
    for outcome in outcomes {
        match outcome {
            Outcome::Keep(t) => by_class.get_mut(&t.label).expect("all labels present").push(t),
            Outcome::MultiDisorder => drops.multi_disorder += 1,
            Outcome::NoPostsBeforeReport => drops.no_posts_before_report += 1,
            Outcome::NotInTopSubreddits => drops.control_not_in_top_subreddits += 1,
            Outcome::InExclusionSubreddits => drops.control_in_exclusion_subreddits += 1,
            Outcome::EmptyAfterTimePrune => drops.empty_after_time_prune += 1,
        }
    }
    drops.eligible_per_class = by_class.iter().map(|(l, v)| (*l, v.len())).collect();

    if let Some((label, _)) = by_class.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::EmptyClass {
            class: label.to_string(),
            drops: serde_json::to_string(&drops).unwrap_or_default(),
        });
    }

    let target = by_class.values().map(Vec::len).min().unwrap_or(0);
    let mut kept = Vec::with_capacity(target * by_class.len());
    for (label, mut members) in by_class {
        // members are already in user_id order
        if members.len() > target {
            let mut rng = seed::rng(spec.seed, "cohort-downsample", &[label.index() as u64]);
            members.shuffle(&mut rng);
            drops.downsampled += members.len() - target;
            members.truncate(target);
            members.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        }
        drops.final_per_class.insert(label, members.len());
        kept.extend(members);
    }
    Ok(CohortDataset { users: kept, drops })
}

/// One row of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub user_id: String,
    pub label: Label,
    pub report_utc: Option<i64>,
    pub n_posts: usize,
    pub year_bucket: i32,
}

impl ManifestEntry {
    pub fn from_timeline(t: &UserTimeline) -> Result<Self> {
        let year_bucket = year_bucket(&t.posts)
            .ok_or_else(|| Error::Invalid(format!("user {} has no posts", t.user_id)))?;
        Ok(Self {
            user_id: t.user_id.clone(),
            label: t.label,
            report_utc: t.report_utc,
            n_posts: t.posts.len(),
            year_bucket,
        })
    }
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const POSTS_FILE: &str = "posts.jsonl";
pub const DROPS_FILE: &str = "drop_counts.json";

/// Writes `manifest.jsonl` and `posts.jsonl` for a labelled set of users.
pub fn write_dataset(dir: &Path, users: &[UserTimeline]) -> Result<Vec<ManifestEntry>> {
    let manifest = users
        .iter()
        .map(ManifestEntry::from_timeline)
        .collect::<Result<Vec<_>>>()?;
    io::write_jsonl(&dir.join(MANIFEST_FILE), &manifest)?;
    io::write_jsonl(&dir.join(POSTS_FILE), users.iter().flat_map(|u| u.posts.iter()))?;
    Ok(manifest)
}

pub fn write_cohort(dir: &Path, cohort: &CohortDataset) -> Result<Vec<ManifestEntry>> {
    let manifest = write_dataset(dir, &cohort.users)?;
    io::write_json(&dir.join(DROPS_FILE), &cohort.drops)?;
    Ok(manifest)
}

/// Reads a dataset directory back into labelled timelines, in manifest order.
/// Posts of users missing from the manifest are ignored.
pub fn read_dataset(dir: &Path) -> Result<Vec<UserTimeline>> {
    let manifest: Vec<ManifestEntry> = io::read_jsonl(&dir.join(MANIFEST_FILE))?;
    let posts: Vec<Post> = io::read_jsonl(&dir.join(POSTS_FILE))?;
    let mut grouped: BTreeMap<String, Vec<Post>> = BTreeMap::new();
    for p in posts {
        grouped.entry(p.user_id.clone()).or_default().push(p);
    }
    manifest
        .into_iter()
        .map(|m| {
            let mut posts = grouped.remove(&m.user_id).unwrap_or_default();
            posts.sort_by_key(|p| p.created_utc);
            if posts.len() != m.n_posts {
                return Err(Error::Invalid(format!(
                    "user {}: manifest says {} posts, found {}",
                    m.user_id,
                    m.n_posts,
                    posts.len()
                )));
            }
            Ok(UserTimeline {
                user_id: m.user_id,
                posts,
                label: m.label,
                report_utc: m.report_utc,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn post(user: &str, t: i64, sub: &str, body: &str) -> Post {
        Post {
            user_id: user.into(),
            created_utc: t,
            subreddit: sub.into(),
            body: body.into(),
        }
    }

    // 2015-06-01T00:00:00Z
    const T2015: i64 = 1_433_116_800;
    const DAY: i64 = 86_400;

    #[test]
    fn ingest_maps_fields() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"{{"user_id":"u1","created_utc":1420070400,"subreddit":"news","body":"hello."}}"#
        )
        .unwrap();
        let r = ingest_posts(f.path(), &FieldMapping::default()).unwrap();
        assert_eq!(r.malformed, 0);
        assert_eq!(r.posts, vec![post("u1", 1_420_070_400, "news", "hello.")]);
    }

    #[test]
    fn ingest_empty_file() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let r = ingest_posts(f.path(), &FieldMapping::default()).unwrap();
        assert!(r.posts.is_empty());
        assert_eq!(r.total_lines, 0);
    }

    #[test]
    fn ingest_counts_malformed() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for i in 0..3 {
            writeln!(
                f,
                r#"{{"user_id":"u{i}","created_utc":"1420070400","body":"x"}}"#
            )
            .unwrap();
        }
        writeln!(f, "{{not json").unwrap();
        let r = ingest_posts(f.path(), &FieldMapping::default()).unwrap();
        assert_eq!(r.posts.len(), 3);
        assert_eq!(r.malformed, 1);
        assert_eq!(r.posts[0].subreddit, "");
    }

    #[test]
    fn ingest_rejects_mostly_malformed() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"user_id":"u","created_utc":5,"body":"x"}}"#).unwrap();
        writeln!(f, r#"{{"user_id":"u","created_utc":-5,"body":"x"}}"#).unwrap();
        writeln!(f, r#"{{"user_id":"","created_utc":5,"body":"x"}}"#).unwrap();
        let err = ingest_posts(f.path(), &FieldMapping::default()).unwrap_err();
        match err {
            Error::TooManyMalformed {
                malformed, total, diagnostics, ..
            } => {
                assert_eq!((malformed, total), (2, 3));
                assert!(diagnostics.contains("line 2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_missing_file_is_fatal() {
        let err = ingest_posts(Path::new("/nonexistent/posts.jsonl"), &FieldMapping::default());
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn ingest_custom_field_names() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"author":"a","created_utc":10,"body":"b","subreddit":null}}"#).unwrap();
        let r = ingest_posts(f.path(), &FieldMapping::pushshift()).unwrap();
        assert_eq!(r.posts[0].user_id, "a");
    }

    #[test]
    fn self_report_first_person() {
        let spec = CohortSpec::default();
        let posts = vec![
            post("u", 100, "", "nothing here"),
            post("u", 200, "", "I was just diagnosed with anxiety yesterday"),
        ];
        let r = detect_self_report(&posts, &spec);
        assert_eq!(r.earliest, Some((Label::Ad, 200)));
        assert_eq!(r.disorders, BTreeSet::from([Label::Ad]));
    }

    #[test]
    fn self_report_whitespace_and_case() {
        let spec = CohortSpec::default();
        let posts = vec![post("u", 1, "", "So  I’M\n DIAGNOSED   with Bipolar")];
        assert_eq!(detect_self_report(&posts, &spec).earliest, Some((Label::Bd, 1)));
    }

    #[test]
    fn self_report_literal_rule_on_third_person() {
        // The literal templates start with a first-person clause, so this
        // phrasing does not contain any of them.
        let spec = CohortSpec::default();
        let posts = vec![post("u", 1, "", "my friend was diagnosed with depression")];
        assert!(detect_self_report(&posts, &spec).disorders.is_empty());
        // Quoted speech is a known false-positive route of substring matching.
        let quoted = vec![post("u", 1, "", "my friend said \"I was diagnosed with depression\"")];
        assert_eq!(
            detect_self_report(&quoted, &spec).earliest,
            Some((Label::Mdd, 1))
        );
    }

    #[test]
    fn self_report_absent() {
        let spec = CohortSpec::default();
        assert_eq!(
            detect_self_report(&[post("u", 1, "", "hi")], &spec),
            SelfReport::default()
        );
    }

    #[test]
    fn year_bucket_rules() {
        assert_eq!(year_bucket(&[post("u", T2015, "", "")]), Some(2015));
        // 2011-01-01T00:00:00Z
        assert_eq!(year_bucket(&[post("u", 1_293_840_000, "", "")]), Some(2011));
        // 2013-03-01 and 2017-03-01
        let span = [post("u", 1_362_096_000, "", ""), post("u", 1_488_326_400, "", "")];
        assert_eq!(year_bucket(&span), Some(2017));
        assert_eq!(year_bucket(&[]), None);
    }

    fn disorder_user(id: &str, label: Label) -> UserHistory {
        let kw = label.keyword().unwrap();
        UserHistory {
            user_id: id.into(),
            posts: vec![
                post(id, T2015, "news", "first post."),
                post(id, T2015 + DAY, "news", &format!("I was diagnosed with {kw}.")),
                post(id, T2015 + 2 * DAY, "news", "after report."),
            ],
        }
    }

    fn control_user(id: &str) -> UserHistory {
        UserHistory {
            user_id: id.into(),
            posts: vec![post(id, T2015, "AskReddit", "a"), post(id, T2015 + 10, "pics", "b")],
        }
    }

    fn small_population() -> Vec<UserHistory> {
        let mut users = Vec::new();
        for i in 0..10 {
            users.push(control_user(&format!("c{i:02}")));
        }
        for i in 0..8 {
            users.push(disorder_user(&format!("b{i:02}"), Label::Bd));
        }
        for i in 0..9 {
            users.push(disorder_user(&format!("m{i:02}"), Label::Mdd));
        }
        for i in 0..12 {
            users.push(disorder_user(&format!("a{i:02}"), Label::Ad));
        }
        users
    }

    #[test]
    fn cohort_is_balanced_to_minimum() {
        let cohort = build_cohort(small_population(), &CohortSpec::default()).unwrap();
        for label in Label::ALL {
            assert_eq!(cohort.drops.final_per_class[&label], 8);
        }
        assert_eq!(cohort.users.len(), 32);
        assert_eq!(cohort.drops.downsampled, 2 + 1 + 4);
        for u in cohort.users.iter().filter(|u| u.label != Label::Control) {
            let report = u.report_utc.unwrap();
            assert_eq!(u.posts.len(), 1);
            assert!(u.posts.iter().all(|p| p.created_utc < report));
        }
    }

    #[test]
    fn cohort_is_deterministic_and_order_free() {
        let spec = CohortSpec { seed: 11, ..CohortSpec::default() };
        let a = build_cohort(small_population(), &spec).unwrap();
        let mut shuffled = small_population();
        shuffled.reverse();
        let b = build_cohort(shuffled, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multi_disorder_user_excluded() {
        let mut users = small_population();
        users.push(UserHistory {
            user_id: "zz".into(),
            posts: vec![
                post("zz", T2015, "", "hello"),
                post("zz", T2015 + 5, "", "I am diagnosed with bipolar"),
                post("zz", T2015 + 9, "", "i have been diagnosed with anxiety"),
            ],
        });
        let cohort = build_cohort(users, &CohortSpec::default()).unwrap();
        assert_eq!(cohort.drops.multi_disorder, 1);
        assert!(cohort.users.iter().all(|u| u.user_id != "zz"));
    }

    #[test]
    fn control_in_disorder_subreddit_excluded() {
        let mut users = small_population();
        users.push(UserHistory {
            user_id: "c_bip".into(),
            posts: vec![post("c_bip", T2015, "AskReddit", "x"), post("c_bip", T2015 + 1, "bipolar", "y")],
        });
        users.push(UserHistory {
            user_id: "c_off".into(),
            posts: vec![post("c_off", T2015, "rust", "x")],
        });
        let cohort = build_cohort(users, &CohortSpec::default()).unwrap();
        assert_eq!(cohort.drops.control_in_exclusion_subreddits, 1);
        assert_eq!(cohort.drops.control_not_in_top_subreddits, 1);
    }

    #[test]
    fn report_in_first_post_drops_user() {
        let mut users = small_population();
        users.push(UserHistory {
            user_id: "early".into(),
            posts: vec![post("early", T2015, "", "I'm diagnosed with depression")],
        });
        let cohort = build_cohort(users, &CohortSpec::default()).unwrap();
        assert_eq!(cohort.drops.no_posts_before_report, 1);
    }

    #[test]
    fn time_range_prunes_posts() {
        let mut users = small_population();
        // 2009-06-01
        users.push(UserHistory {
            user_id: "c_old".into(),
            posts: vec![post("c_old", 1_243_814_400, "news", "old")],
        });
        let cohort = build_cohort(users, &CohortSpec::default()).unwrap();
        assert_eq!(cohort.drops.empty_after_time_prune, 1);
    }

    #[test]
    fn empty_class_is_fatal() {
        let users: Vec<_> = (0..3).map(|i| control_user(&format!("c{i}"))).collect();
        let err = build_cohort(users, &CohortSpec::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyClass { .. }));
    }

    #[test]
    fn spec_validation() {
        let mut spec = CohortSpec::default();
        spec.disorder_patterns.insert(Label::Bd, vec![]);
        assert!(spec.validate().is_err());
        let spec = CohortSpec { time_range: [2019, 2011], ..CohortSpec::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = build_cohort(small_population(), &CohortSpec::default()).unwrap();
        write_cohort(dir.path(), &cohort).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, cohort.users);
    }
}
