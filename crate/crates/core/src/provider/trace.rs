//! JSON-lines trace log. One `call` record per provider call, plus
//! `warning` records for inputs dropped during validation.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Call,
    Warning,
}

/// Which repository, pattern and file a call was made for.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallTag {
    pub repo: Option<String>,
    pub pattern: Option<String>,
    pub path: Option<String>,
}

impl CallTag {
    pub fn repo(repo: &str) -> Self {
        CallTag {
            repo: Some(repo.to_string()),
            ..CallTag::default()
        }
    }

    pub fn with_pattern(&self, pattern: &str) -> Self {
        CallTag {
            pattern: Some(pattern.to_string()),
            ..self.clone()
        }
    }

    pub fn with_path(&self, path: &str) -> Self {
        CallTag {
            path: Some(path.to_string()),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestamp: String,
    pub kind: TraceKind,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<serde_json::Value>,
    #[serde(default)]
    pub response: serde_json::Value,
    #[serde(default)]
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl TraceRecord {
    pub fn warning(model: &str, tag: &CallTag, message: impl Into<String>) -> Self {
        TraceRecord {
            timestamp: now(),
            kind: TraceKind::Warning,
            model: model.to_string(),
            schema_id: None,
            request_sha256: None,
            request: None,
            response: serde_json::Value::Null,
            attempt: 0,
            repo: tag.repo.clone(),
            pattern: tag.pattern.clone(),
            path: tag.path.clone(),
            error: None,
            message: Some(message.into()),
        }
    }

    pub fn is_call(&self) -> bool {
        self.kind == TraceKind::Call
    }
}

pub(crate) fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

enum Target {
    Discard,
    Memory(Vec<TraceRecord>),
    File(BufWriter<File>),
}

/// Serialized single writer shared by every clone.
#[derive(Clone)]
pub struct TraceSink {
    inner: Arc<Mutex<Target>>,
}

impl std::fmt::Debug for TraceSink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TraceSink")
    }
}

impl TraceSink {
    pub fn discard() -> Self {
        Self::with(Target::Discard)
    }

    pub fn memory() -> Self {
        Self::with(Target::Memory(Vec::new()))
    }

    /// Create (truncating) a JSON-lines file, making parent directories.
    pub fn file(path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        Ok(Self::with(Target::File(BufWriter::new(File::create(path)?))))
    }

    fn with(target: Target) -> Self {
        TraceSink {
            inner: Arc::new(Mutex::new(target)),
        }
    }

    pub fn record(&self, record: TraceRecord) {
        let mut guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        match &mut *guard {
            Target::Discard => {}
            Target::Memory(v) => v.push(record),
            Target::File(w) => {
                let line = serde_json::to_string(&record).expect("trace records serialize");
                if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                    tracing::warn!("trace write failed: {e}");
                }
            }
        }
    }

    /// Records held by a memory sink (empty for other sinks).
    pub fn records(&self) -> Vec<TraceRecord> {
        match &*self.inner.lock().unwrap_or_else(|p| p.into_inner()) {
            Target::Memory(v) => v.clone(),
            _ => Vec::new(),
        }
    }
}

/// Read a trace file written by [`TraceSink::file`].
pub fn read_trace_file(path: &Path) -> std::io::Result<Vec<TraceRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), i + 1),
            )
        })?;
        out.push(rec);
    }
    Ok(out)
}
