//! Embeddings of profile examples, persisted as a flat JSON file and
//! searched by linear scan.
//!
//! File layout (`version` 1):
//!
//! ```json
//! {
//!   "version": 1,
//!   "dimension": 256,
//!   "embed_model": "…",
//!   "records": [
//!     { "pattern_name": "…", "example_index": 0,
//!       "vector": { "values": [...], "norm": 1.0 },
//!       "source_sha256": "…" }
//!   ],
//!   "degraded": ["patterns with no examples"]
//! }
//! ```
//!
//! Records are sorted by `(pattern_name, example_index)`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::profile::PatternProfile;
use crate::provider::{CallTag, EmbeddingVector, LlmClient, ProviderError};

pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("dimension mismatch: store has {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("duplicate record ({pattern}, {index})")]
    Duplicate { pattern: String, index: usize },
    #[error("store file {path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub pattern_name: String,
    pub example_index: usize,
    pub vector: EmbeddingVector,
    pub source_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeededStore {
    pub version: u32,
    pub dimension: usize,
    pub embed_model: String,
    pub records: Vec<StoreRecord>,
    pub degraded: Vec<String>,
}

/// Best match of a query against one pattern's examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    /// Cosine mapped from [-1, 1] to [0, 1].
    pub value: f64,
    pub best_example: Option<usize>,
    /// The pattern has no stored examples; `value` is 0.
    pub degraded: bool,
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Embed every example of every profile.
pub fn seed(profiles: &[PatternProfile], client: &LlmClient) -> Result<SeededStore, StoreError> {
    let mut store = SeededStore::empty(client.dimension(), client.embed_model_id());
    for profile in profiles {
        if profile.examples.is_empty() {
            store.degraded.push(profile.name.clone());
            continue;
        }
        let tag = CallTag {
            pattern: Some(profile.name.clone()),
            ..CallTag::default()
        };
        let vectors = client.embed(&profile.examples, &tag)?;
        for (i, (vector, text)) in vectors.into_iter().zip(&profile.examples).enumerate() {
            store.insert(StoreRecord {
                pattern_name: profile.name.clone(),
                example_index: i,
                vector,
                source_sha256: sha256_hex(text),
            })?;
        }
    }
    store.normalize();
    Ok(store)
}

impl SeededStore {
    pub fn empty(dimension: usize, embed_model: &str) -> Self {
        SeededStore {
            version: STORE_VERSION,
            dimension,
            embed_model: embed_model.to_string(),
            records: Vec::new(),
            degraded: Vec::new(),
        }
    }

    pub fn insert(&mut self, record: StoreRecord) -> Result<(), StoreError> {
        if record.vector.dimension() != self.dimension {
            return Err(StoreError::Dimension {
                expected: self.dimension,
                got: record.vector.dimension(),
            });
        }
        if self
            .records
            .iter()
            .any(|r| r.pattern_name == record.pattern_name && r.example_index == record.example_index)
        {
            return Err(StoreError::Duplicate {
                pattern: record.pattern_name,
                index: record.example_index,
            });
        }
        self.records.push(record);
        Ok(())
    }

    fn normalize(&mut self) {
        self.records
            .sort_by(|a, b| a.pattern_name.cmp(&b.pattern_name).then(a.example_index.cmp(&b.example_index)));
        self.degraded.sort();
        self.degraded.dedup();
    }

    /// True when the pattern has no stored examples.
    pub fn is_degraded(&self, pattern_name: &str) -> bool {
        !self.records.iter().any(|r| r.pattern_name == pattern_name)
    }

    pub fn max_similarity(&self, pattern_name: &str, query: &EmbeddingVector) -> Result<Similarity, StoreError> {
        if query.dimension() != self.dimension {
            return Err(StoreError::Dimension {
                expected: self.dimension,
                got: query.dimension(),
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for r in self.records.iter().filter(|r| r.pattern_name == pattern_name) {
            let sim = (r.vector.cosine(query) + 1.0) / 2.0;
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((r.example_index, sim));
            }
        }
        Ok(match best {
            Some((idx, value)) => Similarity {
                value: value.clamp(0.0, 1.0),
                best_example: Some(idx),
                degraded: false,
            },
            None => Similarity {
                value: 0.0,
                best_example: None,
                degraded: true,
            },
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("store serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let err = |message: String| StoreError::File {
            path: path.display().to_string(),
            message,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| err(e.to_string()))?;
        }
        fs::write(path, self.to_json()).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let err = |message: String| StoreError::File {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let store: SeededStore = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if store.version != STORE_VERSION {
            return Err(err(format!("unsupported version {}", store.version)));
        }
        let mut seen = BTreeSet::new();
        for r in &store.records {
            if r.vector.dimension() != store.dimension {
                return Err(StoreError::Dimension {
                    expected: store.dimension,
                    got: r.vector.dimension(),
                });
            }
            if !seen.insert((r.pattern_name.as_str(), r.example_index)) {
                return Err(StoreError::Duplicate {
                    pattern: r.pattern_name.clone(),
                    index: r.example_index,
                });
            }
        }
        Ok(store)
    }
}
