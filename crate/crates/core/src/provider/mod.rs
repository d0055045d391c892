//! Chat-completion and embedding backends behind one contract, and the
//! client that turns raw completions into validated, traced responses.

mod http;
mod mock;
mod schema;
mod templates;
mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpConfig, HttpProvider, API_KEY_ENV};
pub use mock::{hash_embedding, MockMode, MockProvider, MockScript, ScriptFallback, ScriptRule, MOCK_DIMENSION};
pub use schema::{
    DeliberationResponse, InvestigationResponse, PlanResponse, ProfileGenResponse, StructuredResponse,
    TreeFilterEntry, TreeFilterResponse, MAX_PLAN_CHARS,
};
pub use templates::{render, Templates};
pub use trace::{read_trace_file, CallTag, TraceKind, TraceRecord, TraceSink};
pub(crate) use trace::now;

use crate::profile::PatternProfile;
use crate::scanner::parse_tree_paths;
use crate::text::extract_json_object;

/// Completions are tried at most this many times: once, plus one repair re-ask.
pub const MAX_SCHEMA_ATTEMPTS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    TreeFilter,
    Plan,
    Investigation,
    Deliberation,
    ProfileGen,
}

impl SchemaId {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::TreeFilter => "tree_filter",
            SchemaId::Plan => "plan",
            SchemaId::Investigation => "investigation",
            SchemaId::Deliberation => "deliberation",
            SchemaId::ProfileGen => "profile_gen",
        }
    }
}

impl std::fmt::Display for SchemaId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Schema id recorded for embedding calls in the trace log.
pub const EMBEDDING_SCHEMA_ID: &str = "embedding";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("{schema} response failed validation ({reason}); raw response: {raw}")]
    SchemaInvalid { schema: String, reason: String, raw: String },
    #[error("scripted failure: {0}")]
    Scripted(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid request: {0}")]
    Request(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("provider configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub schema: SchemaId,
    pub system_text: String,
    pub user_text: String,
    pub seed: u64,
    /// Placeholder values the texts were rendered from. Rule-based mocks read
    /// these; network backends ignore them.
    #[serde(skip)]
    pub vars: BTreeMap<String, String>,
}

impl LlmRequest {
    pub fn new(schema: SchemaId, system_text: String, user_text: String, seed: u64) -> Result<Self, ProviderError> {
        if system_text.trim().is_empty() || user_text.trim().is_empty() {
            return Err(ProviderError::Request("request texts must be non-empty".into()));
        }
        Ok(LlmRequest {
            schema,
            system_text,
            user_text,
            seed,
            vars: BTreeMap::new(),
        })
    }

    /// Hex SHA-256 over schema, seed and both texts.
    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        for part in [self.schema.as_str(), &self.seed.to_string(), &self.system_text, &self.user_text] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, dimension: usize) -> Result<Self, ProviderError> {
        if values.len() != dimension {
            return Err(ProviderError::Dimension {
                expected: dimension,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::Request("embedding contains non-finite values".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(EmbeddingVector { values, norm })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    /// Cosine similarity in [-1, 1]; 0 if either vector is zero.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        (dot / (self.norm * other.norm)).clamp(-1.0, 1.0)
    }
}

/// A chat-completion and embedding backend. Implementations must tolerate
/// concurrent calls.
pub trait LlmProvider: Send + Sync {
    fn model_id(&self) -> &str;

    fn embed_model_id(&self) -> &str;

    /// Raw completion text for `request`. Transport retries happen inside.
    fn complete(&self, request: &LlmRequest) -> Result<String, ProviderError>;

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeFilterResult {
    /// Sorted by path; confidences in [0, 1].
    pub entries: Vec<TreeFilterEntry>,
}

impl TreeFilterResult {
    pub fn confidence(&self, path: &str) -> Option<f64> {
        self.entries
            .binary_search_by(|e| e.path.as_str().cmp(path))
            .ok()
            .map(|i| self.entries[i].confidence)
    }
}

/// Front end over an [`LlmProvider`]: renders prompts, parses and validates
/// responses with one repair re-ask, and writes the trace log.
#[derive(Clone)]
pub struct LlmClient {
    provider: Arc<dyn LlmProvider>,
    templates: Arc<Templates>,
    trace: TraceSink,
    seed: u64,
    dimension: usize,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("model", &self.provider.model_id())
            .field("seed", &self.seed)
            .field("dimension", &self.dimension)
            .finish()
    }
}

impl LlmClient {
    pub fn new(provider: Arc<dyn LlmProvider>, templates: Templates, seed: u64, dimension: usize) -> Self {
        LlmClient {
            provider,
            templates: Arc::new(templates),
            trace: TraceSink::discard(),
            seed,
            dimension,
        }
    }

    /// Same backend (and therefore the same rate limits), different trace log.
    pub fn with_trace(&self, trace: TraceSink) -> Self {
        LlmClient {
            trace,
            ..self.clone()
        }
    }

    pub fn trace(&self) -> &TraceSink {
        &self.trace
    }

    pub fn model_id(&self) -> &str {
        self.provider.model_id()
    }

    pub fn embed_model_id(&self) -> &str {
        self.provider.embed_model_id()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn warn(&self, tag: &CallTag, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!("{message}");
        self.trace.record(TraceRecord::warning(self.model_id(), tag, message));
    }

    /// Render the templates for `schema` into a request.
    pub fn request(&self, schema: SchemaId, vars: BTreeMap<String, String>) -> Result<LlmRequest, ProviderError> {
        let system = self.templates.system(schema, &vars)?;
        let user = self.templates.user(schema, &vars)?;
        let mut req = LlmRequest::new(schema, system, user, self.seed)?;
        req.vars = vars;
        Ok(req)
    }

    /// Send `request` and parse the reply as `R`, re-asking once with a
    /// repair prompt if the reply does not parse or validate.
    pub fn chat<R: StructuredResponse>(&self, request: &LlmRequest, tag: &CallTag) -> Result<R, ProviderError> {
        if request.schema != R::SCHEMA {
            return Err(ProviderError::Request(format!(
                "request schema {} does not match response type {}",
                request.schema,
                R::SCHEMA
            )));
        }
        let mut current = request.clone();
        let mut last_raw = String::new();
        let mut last_reason = String::new();
        for attempt in 1..=MAX_SCHEMA_ATTEMPTS {
            if attempt > 1 {
                let mut vars = BTreeMap::new();
                vars.insert("original".to_string(), request.user_text.clone());
                vars.insert("error".to_string(), last_reason.clone());
                vars.insert("previous".to_string(), last_raw.clone());
                current.user_text = self.templates.repair(&vars)?;
            }
            let raw = match self.provider.complete(&current) {
                Ok(raw) => raw,
                Err(e) => {
                    self.record_call(&current, tag, attempt, serde_json::Value::Null, Some(e.to_string()));
                    return Err(e);
                }
            };
            let parsed = serde_json::from_str::<R>(extract_json_object(&raw))
                .map_err(|e| format!("not valid JSON for {}: {e}", R::SCHEMA))
                .and_then(|r| r.validate().map(|_| r));
            match parsed {
                Ok(r) => {
                    self.record_call(&current, tag, attempt, serde_json::Value::String(raw), None);
                    return Ok(r);
                }
                Err(reason) => {
                    self.record_call(&current, tag, attempt, serde_json::Value::String(raw.clone()), Some(reason.clone()));
                    last_raw = raw;
                    last_reason = reason;
                }
            }
        }
        Err(ProviderError::SchemaInvalid {
            schema: R::SCHEMA.to_string(),
            reason: last_reason,
            raw: last_raw,
        })
    }

    fn record_call(
        &self,
        request: &LlmRequest,
        tag: &CallTag,
        attempt: u32,
        response: serde_json::Value,
        error: Option<String>,
    ) {
        self.trace.record(TraceRecord {
            timestamp: trace::now(),
            kind: TraceKind::Call,
            model: self.provider.model_id().to_string(),
            schema_id: Some(request.schema.to_string()),
            request_sha256: Some(request.sha256()),
            request: Some(serde_json::json!({
                "system": request.system_text,
                "user": request.user_text,
                "seed": request.seed,
            })),
            response,
            attempt,
            repo: tag.repo.clone(),
            pattern: tag.pattern.clone(),
            path: tag.path.clone(),
            error,
            message: None,
        });
    }

    /// One vector per text, order preserved. An empty input makes no call.
    pub fn embed(&self, texts: &[String], tag: &CallTag) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut h = Sha256::new();
        for t in texts {
            h.update((t.len() as u64).to_le_bytes());
            h.update(t.as_bytes());
        }
        let digest = hex::encode(h.finalize());
        let result: Result<Vec<EmbeddingVector>, ProviderError> = self.provider.embed(texts).and_then(|raw| {
            if raw.len() != texts.len() {
                return Err(ProviderError::Request(format!(
                    "backend returned {} embeddings for {} texts",
                    raw.len(),
                    texts.len()
                )));
            }
            raw.into_iter().map(|v| EmbeddingVector::new(v, self.dimension)).collect()
        });
        let (response, error) = match &result {
            Ok(v) => (serde_json::json!({ "count": v.len(), "dimension": self.dimension }), None),
            Err(e) => (serde_json::Value::Null, Some(e.to_string())),
        };
        self.trace.record(TraceRecord {
            timestamp: trace::now(),
            kind: TraceKind::Call,
            model: self.provider.embed_model_id().to_string(),
            schema_id: Some(EMBEDDING_SCHEMA_ID.to_string()),
            request_sha256: Some(digest),
            request: Some(serde_json::json!({ "texts": texts.len() })),
            response,
            attempt: 1,
            repo: tag.repo.clone(),
            pattern: tag.pattern.clone(),
            path: tag.path.clone(),
            error,
            message: None,
        });
        result
    }

    /// Ask which files in `tree_text` likely hold an instance of `profile`.
    /// Paths absent from the tree are dropped with a traced warning.
    pub fn filter_file_tree(
        &self,
        tree_text: &str,
        profile: &PatternProfile,
        tag: &CallTag,
    ) -> Result<TreeFilterResult, ProviderError> {
        let mut vars = profile_vars(profile);
        vars.insert("tree".into(), tree_text.to_string());
        let request = self.request(SchemaId::TreeFilter, vars)?;
        let response: TreeFilterResponse = self.chat(&request, tag)?;

        let shown: BTreeSet<String> = parse_tree_paths(tree_text).into_iter().collect();
        let mut best: BTreeMap<String, f64> = BTreeMap::new();
        for entry in response.files {
            if !shown.contains(&entry.path) {
                self.warn(tag, format!("tree filter returned path not in tree: {}", entry.path));
                continue;
            }
            let slot = best.entry(entry.path).or_insert(entry.confidence);
            *slot = slot.max(entry.confidence);
        }
        Ok(TreeFilterResult {
            entries: best
                .into_iter()
                .map(|(path, confidence)| TreeFilterEntry { path, confidence })
                .collect(),
        })
    }
}

/// Placeholder values every pattern-scoped prompt shares.
pub(crate) fn profile_vars(profile: &PatternProfile) -> BTreeMap<String, String> {
    let mut vars = BTreeMap::new();
    vars.insert("pattern_name".into(), profile.name.clone());
    vars.insert("description".into(), profile.description.trim_end().to_string());
    vars.insert(
        "globs".into(),
        profile.globs.iter().map(|g| format!("- {g}")).collect::<Vec<_>>().join("\n"),
    );
    vars.insert("keywords".into(), profile.keywords.join(", "));
    vars
}
