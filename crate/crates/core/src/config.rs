//! Run configuration: one TOML file whose hash is recorded in every report.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detector::{DetectOptions, DEFAULT_THRESHOLD, MAX_SCORE};
use crate::prioritizer::{SignalWeights, DEFAULT_TOP_N};
use crate::profile::{builtin_profiles, load_profiles, PatternProfile, ProfileError};
use crate::provider::{
    HttpConfig, HttpProvider, LlmClient, LlmProvider, MockMode, MockProvider, MockScript, ProviderError, Templates,
    MOCK_DIMENSION,
};
use crate::scanner::{ScanConfig, MIN_TREE_BUDGET};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_STORE_PATH: &str = ".patternscout/store.json";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockModeKind {
    #[default]
    KeywordOracle,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub mock_mode: MockModeKind,
    /// Rule file for the scripted mock.
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub embed_model: Option<String>,
    /// Embedding dimension. Required for `http`; the mock uses its own.
    pub dimension: Option<usize>,
    pub seed: u64,
    pub max_inflight: usize,
    pub requests_per_minute: u32,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::default(),
            mock_mode: MockModeKind::default(),
            script: None,
            endpoint: None,
            model: None,
            embed_model: None,
            dimension: None,
            seed: DEFAULT_SEED,
            max_inflight: 4,
            requests_per_minute: 500,
            timeout_secs: 180,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Report file (single repo) or directory (batch).
    pub reports: Option<PathBuf>,
    /// Trace file (single repo) or directory (batch).
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub scan: ScanConfig,
    pub weights: SignalWeights,
    pub top_n: usize,
    pub threshold: u8,
    /// Profile directory; the built-in profiles when unset.
    pub profiles_dir: Option<PathBuf>,
    /// Prompt overrides; built-in prompts when unset.
    pub templates_dir: Option<PathBuf>,
    pub store_path: PathBuf,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            provider: ProviderConfig::default(),
            scan: ScanConfig::default(),
            weights: SignalWeights::default(),
            top_n: DEFAULT_TOP_N,
            threshold: DEFAULT_THRESHOLD,
            profiles_dir: None,
            templates_dir: None,
            store_path: PathBuf::from(DEFAULT_STORE_PATH),
            output: OutputConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Parse TOML. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        resolve(base, &mut cfg.provider.script);
        resolve(base, &mut cfg.profiles_dir);
        resolve(base, &mut cfg.templates_dir);
        resolve(base, &mut cfg.output.reports);
        resolve(base, &mut cfg.output.traces);
        if cfg.store_path.is_relative() {
            cfg.store_path = base.join(&cfg.store_path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.weights.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.top_n == 0 {
            return bad("top_n must be at least 1".into());
        }
        if self.threshold > MAX_SCORE {
            return bad(format!("threshold {} is outside 0..=10", self.threshold));
        }
        if self.scan.truncate_limit == 0 {
            return bad("scan.truncate_limit must be positive".into());
        }
        if self.scan.tree_budget < MIN_TREE_BUDGET {
            tracing::warn!("scan.tree_budget {} is raised to {MIN_TREE_BUDGET}", self.scan.tree_budget);
        }
        let p = &self.provider;
        match p.kind {
            ProviderKind::Http => {
                for (name, v) in [("endpoint", &p.endpoint), ("model", &p.model), ("embed_model", &p.embed_model)] {
                    if v.as_deref().is_none_or(str::is_empty) {
                        return bad(format!("provider.{name} is required for the http provider"));
                    }
                }
                if p.dimension.is_none_or(|d| d == 0) {
                    return bad("provider.dimension is required for the http provider".into());
                }
            }
            ProviderKind::Mock => {
                if p.mock_mode == MockModeKind::Scripted && p.script.is_none() {
                    return bad("provider.script is required for the scripted mock".into());
                }
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, ignoring output locations.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn dimension(&self) -> usize {
        match self.provider.kind {
            ProviderKind::Mock => MOCK_DIMENSION,
            ProviderKind::Http => self.provider.dimension.unwrap_or(0),
        }
    }

    pub fn build_provider(&self) -> Result<Arc<dyn LlmProvider>, ProviderError> {
        let p = &self.provider;
        Ok(match p.kind {
            ProviderKind::Mock => {
                let mode = match p.mock_mode {
                    MockModeKind::KeywordOracle => MockMode::KeywordOracle,
                    MockModeKind::Scripted => {
                        let path = p
                            .script
                            .as_deref()
                            .ok_or_else(|| ProviderError::Config("scripted mock needs provider.script".into()))?;
                        MockMode::Scripted(MockScript::load(path)?)
                    }
                };
                Arc::new(MockProvider::new(mode, p.seed))
            }
            ProviderKind::Http => {
                let need = |v: &Option<String>, name: &str| {
                    v.clone().ok_or_else(|| ProviderError::Config(format!("provider.{name} is required")))
                };
                let mut cfg = HttpConfig::new(&need(&p.endpoint, "endpoint")?, &need(&p.model, "model")?, &need(&p.embed_model, "embed_model")?);
                cfg.max_inflight = p.max_inflight;
                cfg.requests_per_minute = p.requests_per_minute;
                cfg.timeout = Duration::from_secs(p.timeout_secs);
                Arc::new(HttpProvider::new(cfg)?)
            }
        })
    }

    pub fn build_client(&self) -> Result<LlmClient, ProviderError> {
        let templates = match &self.templates_dir {
            Some(dir) => Templates::load(dir)?,
            None => Templates::builtin(),
        };
        Ok(LlmClient::new(self.build_provider()?, templates, self.provider.seed, self.dimension()))
    }

    pub fn profiles(&self) -> Result<Vec<PatternProfile>, ProfileError> {
        match &self.profiles_dir {
            Some(dir) => load_profiles(dir),
            None => Ok(builtin_profiles()),
        }
    }

    pub fn detect_options(&self) -> DetectOptions {
        DetectOptions {
            scan: self.scan.clone(),
            weights: self.weights,
            top_n: self.top_n,
            threshold: self.threshold,
            parallel: false,
            config_hash: self.hash(),
        }
    }
}
