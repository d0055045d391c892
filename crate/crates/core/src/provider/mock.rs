//! Deterministic offline backend.
//!
//! Two modes: `KeywordOracle` answers every request from the profile keywords
//! carried in the request, and `Scripted` replays canned responses matched by
//! schema, request hash or a substring of the prompt. Both are pure functions
//! of the request and the seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_tree_paths, LlmProvider, LlmRequest, ProviderError, SchemaId};
use crate::text::contains_keyword;

pub const MOCK_DIMENSION: usize = 256;

/// Confidence the oracle gives a path that mentions a profile keyword.
const ORACLE_TREE_CONFIDENCE: f64 = 0.9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptFallback {
    KeywordOracle,
    #[default]
    Error,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<SchemaId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_sha256: Option<String>,
    /// Substring of the user prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    /// Fail the call with this message instead of responding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScriptRule {
    pub fn respond(schema: Option<SchemaId>, response: &str) -> Self {
        ScriptRule {
            schema,
            response: Some(response.to_string()),
            ..ScriptRule::default()
        }
    }

    pub fn respond_when(schema: Option<SchemaId>, contains: &str, response: &str) -> Self {
        ScriptRule {
            contains: Some(contains.to_string()),
            ..Self::respond(schema, response)
        }
    }

    pub fn fail_when(schema: Option<SchemaId>, contains: &str, message: &str) -> Self {
        ScriptRule {
            schema,
            contains: Some(contains.to_string()),
            error: Some(message.to_string()),
            ..ScriptRule::default()
        }
    }

    fn matches(&self, request: &LlmRequest, sha: &str) -> bool {
        self.schema.is_none_or(|s| s == request.schema)
            && self.request_sha256.as_deref().is_none_or(|h| h == sha)
            && self.contains.as_deref().is_none_or(|c| request.user_text.contains(c))
    }
}

/// Script file: `{"rules": [...], "fallback": "keyword_oracle" | "error"}`.
/// The first matching rule wins.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub fallback: ScriptFallback,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let body = fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("mock script {}: {e}", path.display())))?;
        serde_json::from_str(&body).map_err(|e| ProviderError::Config(format!("mock script {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockMode {
    KeywordOracle,
    Scripted(MockScript),
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    mode: MockMode,
    seed: u64,
    model: String,
}

impl MockProvider {
    pub fn new(mode: MockMode, seed: u64) -> Self {
        let model = match mode {
            MockMode::KeywordOracle => "mock/keyword-oracle",
            MockMode::Scripted(_) => "mock/scripted",
        };
        MockProvider {
            mode,
            seed,
            model: model.to_string(),
        }
    }

    pub fn keyword_oracle(seed: u64) -> Self {
        Self::new(MockMode::KeywordOracle, seed)
    }
}

impl LlmProvider for MockProvider {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed_model_id(&self) -> &str {
        "mock/hash-embedding-256"
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, ProviderError> {
        match &self.mode {
            MockMode::KeywordOracle => oracle_response(request),
            MockMode::Scripted(script) => {
                let sha = request.sha256();
                match script.rules.iter().find(|r| r.matches(request, &sha)) {
                    Some(ScriptRule { error: Some(msg), .. }) => Err(ProviderError::Scripted(msg.clone())),
                    Some(ScriptRule {
                        response: Some(body), ..
                    }) => Ok(body.clone()),
                    Some(_) => Err(ProviderError::Config("script rule has neither response nor error".into())),
                    None => match script.fallback {
                        ScriptFallback::KeywordOracle => oracle_response(request),
                        ScriptFallback::Error => Err(ProviderError::Scripted(format!(
                            "no script rule matches {} request {sha}",
                            request.schema
                        ))),
                    },
                }
            }
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| hash_embedding(t, self.seed, MOCK_DIMENSION)).collect())
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Bag-of-words embedding: lowercase alphanumeric tokens hashed into
/// `dimension` buckets, then L2-normalized. Text without tokens maps to the
/// zero vector.
pub fn hash_embedding(text: &str, seed: u64, dimension: usize) -> Vec<f64> {
    let mut v = vec![0.0; dimension];
    let lower = text.to_lowercase();
    for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let bucket = (fnv1a(seed, token.as_bytes()) % dimension as u64) as usize;
        v[bucket] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn var<'a>(request: &'a LlmRequest, key: &str) -> Result<&'a str, ProviderError> {
    request
        .vars
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| ProviderError::Request(format!("keyword oracle needs `{key}` for {}", request.schema)))
}

fn keywords(request: &LlmRequest) -> Result<Vec<String>, ProviderError> {
    Ok(var(request, "keywords")?
        .split(", ")
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(String::from)
        .collect())
}

#[derive(Deserialize)]
struct EvidenceLine {
    found: bool,
    confidence: f64,
}

fn oracle_response(request: &LlmRequest) -> Result<String, ProviderError> {
    let body = match request.schema {
        SchemaId::TreeFilter => {
            let kws = keywords(request)?;
            let files: Vec<_> = parse_tree_paths(var(request, "tree")?)
                .into_iter()
                .filter(|p| kws.iter().any(|k| contains_keyword(p, k)))
                .map(|path| serde_json::json!({ "path": path, "confidence": ORACLE_TREE_CONFIDENCE }))
                .collect();
            serde_json::json!({ "files": files })
        }
        SchemaId::Plan => {
            let name = var(request, "pattern_name")?;
            let kws = keywords(request)?;
            serde_json::json!({
                "steps": [
                    format!("Locate artifacts associated with {name}"),
                    format!("Search their contents for: {}", kws.join(", ")),
                    "Combine the per-file findings into an overall judgement",
                ],
                "focus_hints": kws,
            })
        }
        SchemaId::Investigation => {
            let content = var(request, "content")?;
            let kws = keywords(request)?;
            let present: Vec<&String> = kws.iter().filter(|k| contains_keyword(content, k)).collect();
            if present.is_empty() {
                serde_json::json!({
                    "found": false,
                    "confidence": 0.0,
                    "reasoning": "None of the pattern keywords appear in the file.",
                    "snippets": [],
                })
            } else {
                let coverage = present.len() as f64 / kws.len().max(1) as f64;
                let snippet = content
                    .lines()
                    .find(|line| present.iter().any(|k| contains_keyword(line, k)))
                    .map(str::trim)
                    .filter(|l| !l.is_empty());
                serde_json::json!({
                    "found": true,
                    "confidence": 0.5 + 0.5 * coverage,
                    "reasoning": format!(
                        "Mentions {}.",
                        present.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
                    ),
                    "snippets": snippet.into_iter().collect::<Vec<_>>(),
                })
            }
        }
        SchemaId::Deliberation => {
            let lines: Vec<EvidenceLine> = serde_json::from_str(var(request, "evidence")?)
                .map_err(|e| ProviderError::Request(format!("evidence is not JSON: {e}")))?;
            let found: Vec<f64> = lines.iter().filter(|l| l.found).map(|l| l.confidence).collect();
            let best = found.iter().copied().fold(0.0_f64, f64::max);
            let score = if found.is_empty() { 0 } else { (10.0 * best).round() as i64 };
            serde_json::json!({
                "score": score,
                "explanation": format!(
                    "{} of {} files show evidence; strongest confidence {:.2}.",
                    found.len(),
                    lines.len(),
                    best
                ),
            })
        }
        SchemaId::ProfileGen => {
            const STOP: &[&str] = &["that", "this", "with", "from", "each", "into", "their", "which", "where", "when"];
            let text = format!("{} {}", var(request, "name")?, var(request, "description")?).to_lowercase();
            let mut kws: Vec<String> = Vec::new();
            for w in text.split(|c: char| !c.is_alphanumeric()) {
                if w.chars().count() >= 4 && !STOP.contains(&w) && !kws.iter().any(|k| k == w) {
                    kws.push(w.to_string());
                }
            }
            kws.truncate(8);
            serde_json::json!({ "globs": ["**/*"], "keywords": kws, "examples": [] })
        }
    };
    Ok(body.to_string())
}
