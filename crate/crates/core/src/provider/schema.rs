//! Structured response bodies, one per [`SchemaId`].

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::SchemaId;
use crate::scanner::Glob;

/// Plan steps and hints may not exceed this many characters in total.
pub const MAX_PLAN_CHARS: usize = 4_000;

/// A JSON response body the client can parse and check before use.
pub trait StructuredResponse: DeserializeOwned + Send {
    const SCHEMA: SchemaId;

    /// Failing here triggers a re-ask.
    fn validate(&self) -> Result<(), String>;
}

fn unit_interval(name: &str, v: f64) -> Result<(), String> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(format!("{name} {v} is outside [0, 1]"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFilterEntry {
    pub path: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFilterResponse {
    pub files: Vec<TreeFilterEntry>,
}

impl StructuredResponse for TreeFilterResponse {
    const SCHEMA: SchemaId = SchemaId::TreeFilter;

    fn validate(&self) -> Result<(), String> {
        self.files.iter().try_for_each(|f| unit_interval("confidence", f.confidence))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub steps: Vec<String>,
    #[serde(default)]
    pub focus_hints: Vec<String>,
}

impl StructuredResponse for PlanResponse {
    const SCHEMA: SchemaId = SchemaId::Plan;

    fn validate(&self) -> Result<(), String> {
        if self.steps.iter().all(|s| s.trim().is_empty()) {
            return Err("plan has no steps".into());
        }
        let total: usize = self.steps.iter().chain(&self.focus_hints).map(|s| s.chars().count()).sum();
        if total > MAX_PLAN_CHARS {
            return Err(format!("plan is {total} characters, limit {MAX_PLAN_CHARS}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestigationResponse {
    pub found: bool,
    pub confidence: f64,
    #[serde(default)]
    pub reasoning: String,
    #[serde(default)]
    pub snippets: Vec<String>,
}

impl StructuredResponse for InvestigationResponse {
    const SCHEMA: SchemaId = SchemaId::Investigation;

    fn validate(&self) -> Result<(), String> {
        unit_interval("confidence", self.confidence)?;
        if self.found && self.reasoning.trim().is_empty() {
            return Err("reasoning is required when found is true".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliberationResponse {
    pub score: i64,
    #[serde(default)]
    pub explanation: String,
}

impl StructuredResponse for DeliberationResponse {
    const SCHEMA: SchemaId = SchemaId::Deliberation;

    fn validate(&self) -> Result<(), String> {
        if (0..=10).contains(&self.score) {
            Ok(())
        } else {
            Err(format!("score {} is outside 0..=10", self.score))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileGenResponse {
    pub globs: Vec<String>,
    pub keywords: Vec<String>,
    #[serde(default)]
    pub examples: Vec<String>,
}

impl StructuredResponse for ProfileGenResponse {
    const SCHEMA: SchemaId = SchemaId::ProfileGen;

    fn validate(&self) -> Result<(), String> {
        if self.globs.is_empty() {
            return Err("no globs".into());
        }
        for g in &self.globs {
            Glob::parse(g).map_err(|e| e.to_string())?;
        }
        if self.keywords.iter().all(|k| k.trim().is_empty()) {
            return Err("no keywords".into());
        }
        Ok(())
    }
}
