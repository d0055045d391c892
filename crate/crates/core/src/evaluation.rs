//! Ground truth, confusion metrics, File Dominance Index and correlation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::detector::DetectionReport;
use crate::provider::{SchemaId, TraceKind, TraceRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("annotations line {line}: {message}")]
    Annotation { line: u64, message: String },
    #[error("duplicate annotation for repo {repo}, pattern {pattern}")]
    DuplicateAnnotation { repo: String, pattern: String },
    #[error("annotation names unknown pattern {0}")]
    UnknownPattern(String),
    #[error("no annotation for repo {repo}, pattern {pattern}")]
    MissingAnnotation { repo: String, pattern: String },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no investigation records for pattern {0}")]
    NoRecords(String),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("repository {repo}: missing metadata field {field}")]
    MissingField { repo: String, field: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub repo_id: String,
    pub pattern: String,
    pub present: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    records: BTreeMap<(String, String), bool>,
}

impl AnnotationSet {
    pub fn new(records: impl IntoIterator<Item = Annotation>) -> Result<Self, EvalError> {
        let mut set = AnnotationSet::default();
        for a in records {
            set.insert(a)?;
        }
        Ok(set)
    }

    fn insert(&mut self, a: Annotation) -> Result<(), EvalError> {
        let key = (a.repo_id, a.pattern);
        if self.records.contains_key(&key) {
            return Err(EvalError::DuplicateAnnotation {
                repo: key.0,
                pattern: key.1,
            });
        }
        self.records.insert(key, a.present);
        Ok(())
    }

    /// Parse CSV with header `repo_id,pattern,present`.
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header_err = |message: String| EvalError::Annotation { line: 1, message };
        let headers = reader.headers().map_err(|e| header_err(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["repo_id", "pattern", "present"] {
            return Err(header_err(format!(
                "expected header repo_id,pattern,present, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut set = AnnotationSet::default();
        for row in reader.records() {
            let row = row.map_err(|e| EvalError::Annotation {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line());
            let present = match &row[2] {
                "true" => true,
                "false" => false,
                other => {
                    return Err(EvalError::Annotation {
                        line,
                        message: format!("present must be true or false, got {other:?}"),
                    })
                }
            };
            if row[0].is_empty() || row[1].is_empty() {
                return Err(EvalError::Annotation {
                    line,
                    message: "empty repo_id or pattern".into(),
                });
            }
            set.insert(Annotation {
                repo_id: row[0].to_string(),
                pattern: row[1].to_string(),
                present,
            })?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_csv(&text)
    }

    pub fn get(&self, repo_id: &str, pattern: &str) -> Option<bool> {
        self.records.get(&(repo_id.to_string(), pattern.to_string())).copied()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn patterns(&self) -> BTreeSet<&str> {
        self.records.keys().map(|(_, p)| p.as_str()).collect()
    }

    /// Every annotated pattern must be one of `known`.
    pub fn check_patterns<'a>(&self, known: impl IntoIterator<Item = &'a str>) -> Result<(), EvalError> {
        let known: BTreeSet<&str> = known.into_iter().collect();
        match self.patterns().into_iter().find(|p| !known.contains(p)) {
            Some(p) => Err(EvalError::UnknownPattern(p.to_string())),
            None => Ok(()),
        }
    }

    /// Fraction of annotated repositories with the pattern present.
    pub fn prevalence(&self, pattern: &str) -> Ratio {
        let rows: Vec<bool> = self.records.iter().filter(|((_, p), _)| p == pattern).map(|(_, v)| *v).collect();
        Ratio::of(rows.iter().filter(|v| **v).count() as f64, rows.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl std::ops::AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

/// A ratio that may be 0/0. Serialized as a number or `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    Undefined,
}

impl Ratio {
    pub fn of(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Ratio::Undefined
        } else {
            Ratio::Value(num / den)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(v),
            Ratio::Undefined => None,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Value(v) => write!(f, "{v:.3}"),
            Ratio::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Ratio::Value(v) => s.serialize_f64(*v),
            Ratio::Undefined => s.serialize_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub precision: Ratio,
    pub recall: Ratio,
    pub accuracy: Ratio,
    pub f1: Ratio,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let precision = Ratio::of(cm.tp as f64, (cm.tp + cm.fp) as f64);
    let recall = Ratio::of(cm.tp as f64, (cm.tp + cm.fn_) as f64);
    let accuracy = Ratio::of((cm.tp + cm.tn) as f64, cm.total() as f64);
    let f1 = match (precision, recall) {
        (Ratio::Value(p), Ratio::Value(r)) => Ratio::of(2.0 * p * r, p + r),
        _ => Ratio::Undefined,
    };
    Ok(Metrics {
        precision,
        recall,
        accuracy,
        f1,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub repo_id: String,
    pub pattern: String,
    pub detected: bool,
}

impl Prediction {
    pub fn from_reports(reports: &[DetectionReport]) -> Vec<Prediction> {
        reports
            .iter()
            .flat_map(|r| {
                r.verdicts.iter().map(|v| Prediction {
                    repo_id: r.repo.clone(),
                    pattern: v.pattern_name.clone(),
                    detected: v.detected,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub overall: ConfusionMatrix,
    pub per_pattern: BTreeMap<String, ConfusionMatrix>,
}

pub fn confusion(predictions: &[Prediction], truth: &AnnotationSet) -> Result<Confusion, EvalError> {
    let mut per_pattern: BTreeMap<String, ConfusionMatrix> = BTreeMap::new();
    for p in predictions {
        let actual = truth.get(&p.repo_id, &p.pattern).ok_or_else(|| EvalError::MissingAnnotation {
            repo: p.repo_id.clone(),
            pattern: p.pattern.clone(),
        })?;
        per_pattern.entry(p.pattern.clone()).or_default().add(p.detected, actual);
    }
    let mut overall = ConfusionMatrix::default();
    for cm in per_pattern.values() {
        overall += *cm;
    }
    Ok(Confusion { overall, per_pattern })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdiRow {
    pub filename: String,
    pub count: u64,
    pub fdi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdiTable {
    pub pattern_name: String,
    /// Unique filenames.
    pub n: usize,
    /// Total occurrences.
    pub t: u64,
    pub rows: Vec<FdiRow>,
}

/// `count * unique / total`: how many times the average occurrence count.
pub fn fdi_index(count: u64, unique: usize, total: u64) -> f64 {
    count as f64 * unique as f64 / total as f64
}

impl FdiTable {
    /// Rows sorted by FDI descending, then filename. Zero counts are ignored.
    pub fn from_counts(pattern_name: &str, counts: &BTreeMap<String, u64>) -> Result<Self, EvalError> {
        let counts: Vec<(&String, u64)> = counts.iter().filter(|(_, c)| **c > 0).map(|(f, c)| (f, *c)).collect();
        if counts.is_empty() {
            return Err(EvalError::NoRecords(pattern_name.to_string()));
        }
        let n = counts.len();
        let t: u64 = counts.iter().map(|(_, c)| c).sum();
        let mut rows: Vec<FdiRow> = counts
            .into_iter()
            .map(|(f, c)| FdiRow {
                filename: f.clone(),
                count: c,
                fdi: fdi_index(c, n, t),
            })
            .collect();
        rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.filename.cmp(&b.filename)));
        Ok(FdiTable {
            pattern_name: pattern_name.to_string(),
            n,
            t,
            rows,
        })
    }

    pub fn max_fdi(&self) -> f64 {
        self.rows.first().map_or(0.0, |r| r.fdi)
    }
}

fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

/// Count first-attempt investigation calls per file basename for `pattern`
/// across every repository in `logs`.
pub fn compute_fdi(logs: &[TraceRecord], pattern: &str) -> Result<FdiTable, EvalError> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for r in logs {
        if r.kind == TraceKind::Call
            && r.attempt == 1
            && r.schema_id.as_deref() == Some(SchemaId::Investigation.as_str())
            && r.pattern.as_deref() == Some(pattern)
        {
            if let Some(path) = &r.path {
                *counts.entry(basename(path).to_string()).or_default() += 1;
            }
        }
    }
    FdiTable::from_counts(pattern, &counts)
}

/// One FDI table per pattern present in `logs`, keyed by pattern name.
pub fn compute_all_fdi(logs: &[TraceRecord]) -> BTreeMap<String, FdiTable> {
    let patterns: BTreeSet<&str> = logs
        .iter()
        .filter(|r| r.schema_id.as_deref() == Some(SchemaId::Investigation.as_str()))
        .filter_map(|r| r.pattern.as_deref())
        .collect();
    patterns
        .into_iter()
        .filter_map(|p| compute_fdi(logs, p).ok().map(|t| (p.to_string(), t)))
        .collect()
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFewPoints(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub const MIN_STARS: u64 = 10;
pub const MIN_ACTIVE_MONTHS: u64 = 6;
pub const MIN_SIZE_KB: u64 = 100;
pub const MAX_SIZE_KB: u64 = 100 * 1024;
pub const MIN_MATCHING_ARTIFACTS: u64 = 3;
pub const MIN_RECENT_COMMITS: u64 = 5;
pub const MIN_CONTRIBUTORS: u64 = 2;

/// Candidate repository metadata. Every numeric field is required by
/// [`filter_dataset`]; they are optional here so that incomplete input is
/// reported rather than rejected at parse time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoMeta {
    pub repo_id: String,
    pub stars: Option<u64>,
    pub active_months: Option<u64>,
    pub size_kb: Option<u64>,
    /// Files matching the profile globs.
    pub matching_artifacts: Option<u64>,
    /// Commits in the last three months.
    pub recent_commits: Option<u64>,
    pub contributors: Option<u64>,
}

fn require(meta: &RepoMeta, field: &'static str, v: Option<u64>) -> Result<u64, EvalError> {
    v.ok_or_else(|| EvalError::MissingField {
        repo: meta.repo_id.clone(),
        field,
    })
}

impl RepoMeta {
    /// Whether the repository satisfies every selection criterion (all bounds
    /// inclusive).
    pub fn qualifies(&self) -> Result<bool, EvalError> {
        let stars = require(self, "stars", self.stars)?;
        let months = require(self, "active_months", self.active_months)?;
        let size = require(self, "size_kb", self.size_kb)?;
        let artifacts = require(self, "matching_artifacts", self.matching_artifacts)?;
        let commits = require(self, "recent_commits", self.recent_commits)?;
        let contributors = require(self, "contributors", self.contributors)?;
        Ok(stars >= MIN_STARS
            && months >= MIN_ACTIVE_MONTHS
            && (MIN_SIZE_KB..=MAX_SIZE_KB).contains(&size)
            && artifacts >= MIN_MATCHING_ARTIFACTS
            && commits >= MIN_RECENT_COMMITS
            && contributors >= MIN_CONTRIBUTORS)
    }
}

/// Keep the qualifying repositories, in input order.
pub fn filter_dataset(repos: &[RepoMeta]) -> Result<Vec<RepoMeta>, EvalError> {
    let mut kept = Vec::new();
    for r in repos {
        if r.qualifies()? {
            kept.push(r.clone());
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternEvaluation {
    pub pattern: String,
    pub prevalence: Ratio,
    pub confusion: ConfusionMatrix,
    pub precision: Ratio,
    pub recall: Ratio,
    pub accuracy: Ratio,
    pub f1: Ratio,
    pub max_fdi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub patterns: Vec<PatternEvaluation>,
}

const UNDEFINED_METRICS: Metrics = Metrics {
    precision: Ratio::Undefined,
    recall: Ratio::Undefined,
    accuracy: Ratio::Undefined,
    f1: Ratio::Undefined,
};

/// Score `reports` against `truth`. `fdi` supplies the Max FDI column.
pub fn evaluate(
    reports: &[DetectionReport],
    truth: &AnnotationSet,
    fdi: &BTreeMap<String, FdiTable>,
) -> Result<EvaluationReport, EvalError> {
    let c = confusion(&Prediction::from_reports(reports), truth)?;
    let overall = metrics(&c.overall)?;
    let names: BTreeSet<&str> = truth.patterns().into_iter().chain(c.per_pattern.keys().map(String::as_str)).collect();
    let patterns = names
        .into_iter()
        .map(|name| {
            let cm = c.per_pattern.get(name).copied().unwrap_or_default();
            let m = metrics(&cm).unwrap_or(UNDEFINED_METRICS);
            PatternEvaluation {
                pattern: name.to_string(),
                prevalence: truth.prevalence(name),
                confusion: cm,
                precision: m.precision,
                recall: m.recall,
                accuracy: m.accuracy,
                f1: m.f1,
                max_fdi: fdi.get(name).map(FdiTable::max_fdi),
            }
        })
        .collect();
    Ok(EvaluationReport {
        confusion: c.overall,
        metrics: overall,
        patterns,
    })
}

impl EvaluationReport {
    /// Plain-text table: per-pattern PV, P, R, A, F1 and Max FDI, then the
    /// overall confusion matrix and metrics.
    pub fn render_table(&self) -> String {
        let width = self.patterns.iter().map(|p| p.pattern.chars().count()).max().unwrap_or(7).max(7);
        let mut out = format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}\n",
            "Pattern", "PV", "P", "R", "A", "F1", "Max FDI"
        );
        for p in &self.patterns {
            let fdi = p.max_fdi.map_or("-".to_string(), |v| format!("{v:.2}"));
            out.push_str(&format!(
                "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}\n",
                p.pattern,
                p.prevalence.to_string(),
                p.precision.to_string(),
                p.recall.to_string(),
                p.accuracy.to_string(),
                p.f1.to_string(),
                fdi
            ));
        }
        let c = &self.confusion;
        out.push_str(&format!(
            "\nTP {}  FP {}  TN {}  FN {}  (total {})\n",
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            c.total()
        ));
        let m = &self.metrics;
        out.push_str(&format!(
            "accuracy {}  precision {}  recall {}  F1 {}\n",
            m.accuracy, m.precision, m.recall, m.f1
        ));
        out
    }
}
