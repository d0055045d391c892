//! Pattern detection: planning, investigation and deliberation over the
//! files selected for each pattern, producing one verdict per pattern.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prioritizer::{keyword_score, select_top, FileCandidate, PrioritizeError, SignalWeights, DEFAULT_TOP_N};
use crate::profile::PatternProfile;
use crate::provider::{
    profile_vars, CallTag, DeliberationResponse, EmbeddingVector, InvestigationResponse, LlmClient, PlanResponse,
    ProviderError, SchemaId,
};
use crate::scanner::{match_globs, read_truncated, scan_repo, summarize_repo, FileContent, RepoSummary, ScanConfig, ScanError};
use crate::text::clip_chars;
use crate::vector_store::SeededStore;

pub const MAX_EXPLANATION_CHARS: usize = 220;
pub const DEFAULT_THRESHOLD: u8 = 5;
pub const MAX_SCORE: u8 = 10;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prioritize(#[from] PrioritizeError),
    #[error("threshold {0} is outside 0..=10")]
    Threshold(u8),
    #[error("top_n must be at least 1")]
    TopN,
    #[error("no profiles to detect")]
    NoProfiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionPlan {
    pub pattern_name: String,
    pub steps: Vec<String>,
    pub focus_hints: Vec<String>,
}

impl DetectionPlan {
    fn render(&self) -> String {
        let mut out: Vec<String> = self.steps.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect();
        if !self.focus_hints.is_empty() {
            out.push(format!("Focus on: {}", self.focus_hints.join("; ")));
        }
        out.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub path: String,
    pub found: bool,
    pub confidence: f64,
    pub reasoning: String,
    pub snippets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pattern_name: String,
    pub score: u8,
    pub detected: bool,
    pub explanation: String,
    pub evidence_paths: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Verdict {
    /// Build a verdict, deriving `detected` from the threshold and clipping
    /// the explanation.
    pub fn new(pattern_name: &str, score: u8, threshold: u8, explanation: &str, evidence_paths: Vec<String>) -> Self {
        let score = score.min(MAX_SCORE);
        Verdict {
            pattern_name: pattern_name.to_string(),
            score,
            detected: score >= threshold,
            explanation: clip_chars(explanation.trim(), MAX_EXPLANATION_CHARS),
            evidence_paths,
            error: None,
        }
    }

    /// Score-0 verdict carrying the failure that stopped detection.
    pub fn failed(pattern_name: &str, threshold: u8, error: &str) -> Self {
        let mut v = Verdict::new(pattern_name, 0, threshold, "Detection failed for this pattern.", Vec::new());
        v.error = Some(error.to_string());
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model: String,
    pub embed_model: String,
    pub seed: u64,
    pub config_hash: String,
    pub tool_version: String,
    pub threshold: u8,
    pub top_n: usize,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub repo: String,
    pub verdicts: Vec<Verdict>,
    pub run: RunMetadata,
}

impl DetectionReport {
    /// Copy with both timestamps blanked, for comparing runs.
    pub fn without_timestamps(&self) -> Self {
        let mut r = self.clone();
        r.run.started_at.clear();
        r.run.finished_at.clear();
        r
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn verdict(&self, pattern_name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.pattern_name == pattern_name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOptions {
    pub scan: ScanConfig,
    pub weights: SignalWeights,
    pub top_n: usize,
    pub threshold: u8,
    /// Detect patterns concurrently. Verdict order is unaffected.
    pub parallel: bool,
    pub config_hash: String,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            scan: ScanConfig::default(),
            weights: SignalWeights::default(),
            top_n: DEFAULT_TOP_N,
            threshold: DEFAULT_THRESHOLD,
            parallel: false,
            config_hash: String::new(),
        }
    }
}

impl DetectOptions {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.threshold > MAX_SCORE {
            return Err(DetectError::Threshold(self.threshold));
        }
        if self.top_n == 0 {
            return Err(DetectError::TopN);
        }
        self.weights.validate()?;
        Ok(())
    }
}

pub fn plan(
    profile: &PatternProfile,
    summary: &RepoSummary,
    client: &LlmClient,
    tag: &CallTag,
) -> Result<DetectionPlan, ProviderError> {
    let mut vars = profile_vars(profile);
    vars.insert("summary".into(), summary.render());
    let request = client.request(SchemaId::Plan, vars)?;
    let response: PlanResponse = client.chat(&request, tag)?;
    Ok(DetectionPlan {
        pattern_name: profile.name.clone(),
        steps: response.steps.into_iter().filter(|s| !s.trim().is_empty()).collect(),
        focus_hints: response.focus_hints,
    })
}

/// Ask about each file in turn. Files whose call fails yield no evidence;
/// the failure is already in the trace.
pub fn investigate(
    files: &[&FileContent],
    plan: &DetectionPlan,
    profile: &PatternProfile,
    summary: &RepoSummary,
    client: &LlmClient,
    tag: &CallTag,
) -> Vec<Evidence> {
    let mut base = profile_vars(profile);
    base.insert("summary".into(), summary.render());
    base.insert("plan".into(), plan.render());
    base.insert(
        "example".into(),
        profile.examples.first().cloned().unwrap_or_else(|| "(no example available)".into()),
    );

    let mut out = Vec::new();
    for file in files {
        let file_tag = tag.with_path(&file.path);
        let mut vars = base.clone();
        vars.insert("path".into(), file.path.clone());
        vars.insert("content".into(), file.text.clone());
        let response = client
            .request(SchemaId::Investigation, vars)
            .and_then(|req| client.chat::<InvestigationResponse>(&req, &file_tag));
        let response = match response {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!("investigation of {} failed: {e}", file.path);
                continue;
            }
        };
        let mut snippets = Vec::new();
        for s in response.snippets {
            if !s.is_empty() && file.text.contains(&s) {
                snippets.push(s);
            } else {
                client.warn(&file_tag, format!("dropped snippet not found in {}: {}", file.path, clip_chars(&s, 80)));
            }
        }
        out.push(Evidence {
            path: file.path.clone(),
            found: response.found,
            confidence: response.confidence,
            reasoning: response.reasoning,
            snippets,
        });
    }
    out
}

#[derive(Serialize)]
struct EvidenceSummary<'a> {
    path: &'a str,
    found: bool,
    confidence: f64,
    explanation: String,
}

/// Final 0-10 score from the evidence summaries. No evidence means score 0
/// and no call.
pub fn deliberate(
    evidence: &[Evidence],
    profile: &PatternProfile,
    client: &LlmClient,
    threshold: u8,
    tag: &CallTag,
) -> Result<Verdict, DetectError> {
    if threshold > MAX_SCORE {
        return Err(DetectError::Threshold(threshold));
    }
    if evidence.is_empty() {
        return Ok(Verdict::new(&profile.name, 0, threshold, "No files were investigated.", Vec::new()));
    }
    let summaries: Vec<EvidenceSummary> = evidence
        .iter()
        .map(|e| EvidenceSummary {
            path: &e.path,
            found: e.found,
            confidence: e.confidence,
            explanation: clip_chars(&e.reasoning, MAX_EXPLANATION_CHARS),
        })
        .collect();
    let mut vars = BTreeMap::new();
    vars.insert("pattern_name".to_string(), profile.name.clone());
    vars.insert("description".to_string(), profile.description.trim_end().to_string());
    vars.insert(
        "evidence".to_string(),
        serde_json::to_string_pretty(&summaries).expect("summaries serialize"),
    );
    vars.insert("explanation_limit".to_string(), MAX_EXPLANATION_CHARS.to_string());
    let request = client.request(SchemaId::Deliberation, vars)?;
    let response: DeliberationResponse = client.chat(&request, tag)?;
    let paths = evidence.iter().filter(|e| e.found).map(|e| e.path.clone()).collect();
    // validated to 0..=10
    Ok(Verdict::new(&profile.name, response.score as u8, threshold, &response.explanation, paths))
}

/// Per-pattern state after glob matching and tree filtering.
struct Pool {
    tree: BTreeMap<String, f64>,
    paths: BTreeSet<String>,
}

/// Run the full pipeline over one repository.
pub fn detect(
    repo_root: &Path,
    profiles: &[PatternProfile],
    options: &DetectOptions,
    client: &LlmClient,
    store: &SeededStore,
) -> Result<DetectionReport, DetectError> {
    options.validate()?;
    if profiles.is_empty() {
        return Err(DetectError::NoProfiles);
    }
    let started_at = crate::provider::now();
    let snapshot = scan_repo(repo_root, &options.scan)?;
    let repo = snapshot.name();
    let repo_tag = CallTag::repo(&repo);
    for w in &snapshot.warnings {
        client.warn(&repo_tag, w.clone());
    }
    let summary = summarize_repo(&snapshot);
    let text_files: BTreeSet<&str> = snapshot.files.iter().filter(|f| f.is_text).map(|f| f.path.as_str()).collect();

    // Globs and tree filter.
    let pools: Vec<Result<Pool, String>> = map_maybe_parallel(profiles, options.parallel, |profile| {
        let tag = repo_tag.with_pattern(&profile.name);
        let globbed = match_globs(&snapshot, &profile.globs).map_err(|e| e.to_string())?;
        let filtered = client
            .filter_file_tree(&snapshot.tree_text, profile, &tag)
            .map_err(|e| format!("tree filter failed: {e}"))?;
        let tree: BTreeMap<String, f64> = filtered.entries.into_iter().map(|e| (e.path, e.confidence)).collect();
        let paths = globbed
            .into_iter()
            .chain(tree.keys().cloned())
            .filter(|p| text_files.contains(p.as_str()))
            .collect();
        Ok(Pool { tree, paths })
    });

    // Read every pooled file once and embed them in one batch.
    let mut contents: BTreeMap<String, FileContent> = BTreeMap::new();
    for path in pools.iter().flatten().flat_map(|p| p.paths.iter()) {
        if contents.contains_key(path) {
            continue;
        }
        match read_truncated(&snapshot.root, path, options.scan.truncate_limit) {
            Ok(c) => {
                contents.insert(path.clone(), c);
            }
            Err(e) => client.warn(&repo_tag.with_path(path), format!("could not read {path}: {e}")),
        }
    }
    let needs_embedding = profiles.iter().any(|p| !p.is_degraded() && !store.is_degraded(&p.name));
    let embeddings: BTreeMap<String, EmbeddingVector> = if needs_embedding && !contents.is_empty() {
        let texts: Vec<String> = contents.values().map(|c| c.text.clone()).collect();
        match client.embed(&texts, &repo_tag) {
            Ok(vectors) => contents.keys().cloned().zip(vectors).collect(),
            Err(e) => {
                client.warn(&repo_tag, format!("embedding failed, similarity scores set to 0: {e}"));
                BTreeMap::new()
            }
        }
    } else {
        BTreeMap::new()
    };

    let indexed: Vec<(&PatternProfile, Result<Pool, String>)> = profiles.iter().zip(pools).collect();
    let verdicts = map_maybe_parallel(&indexed, options.parallel, |(profile, pool)| {
        let tag = repo_tag.with_pattern(&profile.name);
        let result = match pool {
            Ok(pool) => detect_pattern(profile, pool, &contents, &embeddings, &summary, options, client, store, &tag),
            Err(e) => Err(e.clone()),
        };
        result.unwrap_or_else(|e| {
            client.warn(&tag, format!("pattern failed: {e}"));
            Verdict::failed(&profile.name, options.threshold, &e)
        })
    });

    Ok(DetectionReport {
        repo,
        verdicts,
        run: RunMetadata {
            model: client.model_id().to_string(),
            embed_model: client.embed_model_id().to_string(),
            seed: client.seed(),
            config_hash: options.config_hash.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            threshold: options.threshold,
            top_n: options.top_n,
            started_at,
            finished_at: crate::provider::now(),
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn detect_pattern(
    profile: &PatternProfile,
    pool: &Pool,
    contents: &BTreeMap<String, FileContent>,
    embeddings: &BTreeMap<String, EmbeddingVector>,
    summary: &RepoSummary,
    options: &DetectOptions,
    client: &LlmClient,
    store: &SeededStore,
    tag: &CallTag,
) -> Result<Verdict, String> {
    let degraded = profile.is_degraded() || store.is_degraded(&profile.name);
    let mut candidates = Vec::new();
    for path in &pool.paths {
        let Some(content) = contents.get(path) else { continue };
        let kw = keyword_score(&content.text, &profile.keywords);
        let emb = match embeddings.get(path) {
            Some(v) if !degraded && v.norm > 0.0 => match store.max_similarity(&profile.name, v) {
                Ok(s) => s.value,
                Err(e) => {
                    client.warn(tag, format!("similarity unavailable: {e}"));
                    0.0
                }
            },
            _ => 0.0,
        };
        let tree = pool.tree.get(path).copied().unwrap_or(0.0);
        candidates.push(FileCandidate::new(path, tree, kw, emb, &options.weights, degraded).map_err(|e| e.to_string())?);
    }
    if candidates.is_empty() {
        return Ok(Verdict::new(&profile.name, 0, options.threshold, "No candidate files matched this pattern.", Vec::new()));
    }
    let selected = select_top(&candidates, options.top_n);
    let files: Vec<&FileContent> = selected.iter().filter_map(|c| contents.get(&c.path)).collect();
    let plan = plan(profile, summary, client, tag).map_err(|e| format!("planning failed: {e}"))?;
    let evidence = investigate(&files, &plan, profile, summary, client, tag);
    deliberate(&evidence, profile, client, options.threshold, tag).map_err(|e| format!("deliberation failed: {e}"))
}

fn map_maybe_parallel<T: Sync, R: Send>(items: &[T], parallel: bool, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}
