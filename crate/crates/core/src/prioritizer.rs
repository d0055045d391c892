//! File prioritization: fuse tree-filter confidence, keyword coverage and
//! embedding similarity into one priority and pick the files to investigate.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::contains_keyword_lowered;

pub const DEFAULT_TOP_N: usize = 20;
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrioritizeError {
    #[error("weights must be non-negative and sum to 1, got tree={tree} keyword={keyword} embed={embed}")]
    Weights { tree: f64, keyword: f64, embed: f64 },
    #[error("{signal} signal {value} is outside [0, 1]")]
    OutOfRange { signal: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalWeights {
    pub tree: f64,
    pub keyword: f64,
    pub embed: f64,
}

impl Default for SignalWeights {
    fn default() -> Self {
        SignalWeights {
            tree: 0.7,
            keyword: 0.2,
            embed: 0.1,
        }
    }
}

impl SignalWeights {
    pub fn new(tree: f64, keyword: f64, embed: f64) -> Result<Self, PrioritizeError> {
        let w = SignalWeights { tree, keyword, embed };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), PrioritizeError> {
        let parts = [self.tree, self.keyword, self.embed];
        let ok = parts.iter().all(|w| w.is_finite() && *w >= 0.0)
            && (parts.iter().sum::<f64>() - 1.0).abs() <= WEIGHT_SUM_TOLERANCE;
        if ok {
            Ok(())
        } else {
            Err(PrioritizeError::Weights {
                tree: self.tree,
                keyword: self.keyword,
                embed: self.embed,
            })
        }
    }

    /// Weights actually applied: without examples the embedding weight moves
    /// to keyword matching.
    pub fn effective(&self, degraded: bool) -> SignalWeights {
        if degraded {
            SignalWeights {
                tree: self.tree,
                keyword: self.keyword + self.embed,
                embed: 0.0,
            }
        } else {
            *self
        }
    }
}

/// Fraction of distinct `keywords` found in `content` on word boundaries,
/// ignoring case. Repeats do not count twice.
pub fn keyword_score(content: &str, keywords: &[String]) -> f64 {
    let mut distinct: Vec<String> = keywords.iter().map(|k| k.to_lowercase()).filter(|k| !k.is_empty()).collect();
    distinct.sort();
    distinct.dedup();
    if distinct.is_empty() {
        return 0.0;
    }
    let hay = content.to_lowercase();
    let hits = distinct.iter().filter(|k| contains_keyword_lowered(&hay, k)).count();
    hits as f64 / distinct.len() as f64
}

fn check(signal: &'static str, value: f64) -> Result<(), PrioritizeError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(PrioritizeError::OutOfRange { signal, value })
    }
}

/// Weighted sum of the three signals, clamped to [0, 1].
pub fn fuse(
    tree_conf: f64,
    keyword: f64,
    embed: f64,
    weights: &SignalWeights,
    degraded: bool,
) -> Result<f64, PrioritizeError> {
    weights.validate()?;
    check("tree", tree_conf)?;
    check("keyword", keyword)?;
    check("embed", embed)?;
    let w = weights.effective(degraded);
    Ok((w.tree * tree_conf + w.keyword * keyword + w.embed * embed).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileCandidate {
    pub path: String,
    pub tree_confidence: f64,
    pub keyword_score: f64,
    pub embed_score: f64,
    pub priority: f64,
}

impl FileCandidate {
    pub fn new(
        path: &str,
        tree_confidence: f64,
        keyword_score: f64,
        embed_score: f64,
        weights: &SignalWeights,
        degraded: bool,
    ) -> Result<Self, PrioritizeError> {
        Ok(FileCandidate {
            path: path.to_string(),
            tree_confidence,
            keyword_score,
            embed_score,
            priority: fuse(tree_confidence, keyword_score, embed_score, weights, degraded)?,
        })
    }
}

/// Priority descending, then path ascending.
pub fn rank_order(a: &FileCandidate, b: &FileCandidate) -> Ordering {
    b.priority.total_cmp(&a.priority).then_with(|| a.path.cmp(&b.path))
}

/// The `n` highest-priority candidates in rank order.
pub fn select_top(candidates: &[FileCandidate], n: usize) -> Vec<FileCandidate> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(rank_order);
    sorted.truncate(n.max(1));
    sorted
}
