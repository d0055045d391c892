//! Repository parsing: walking, tree rendering, glob matching, truncated
//! reads and the repository summary.

mod glob;
mod tree;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

pub use glob::{Glob, GlobError, GlobErrorKind};
pub use tree::{parse_tree_paths, render_tree, MIN_TREE_BUDGET};

pub const DEFAULT_TREE_BUDGET: usize = 60_000;
pub const DEFAULT_TRUNCATE_LIMIT: usize = 50_000;
pub const TRUNCATION_MARKER: &str = "\n…[truncated]";
/// Bytes inspected for a NUL when deciding whether a file is binary.
pub const BINARY_SNIFF_BYTES: usize = 8_192;
pub const README_EXCERPT_CHARS: usize = 2_000;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("repository root {path} is not a readable directory")]
    BadRoot { path: PathBuf },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("path `{0}` escapes the repository root")]
    EscapesRoot(String),
    #[error(transparent)]
    Glob(#[from] GlobError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub tree_budget: usize,
    pub truncate_limit: usize,
    /// Directory names skipped at any depth.
    pub ignore_dirs: Vec<String>,
    pub follow_symlinks: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            tree_budget: DEFAULT_TREE_BUDGET,
            truncate_limit: DEFAULT_TRUNCATE_LIMIT,
            ignore_dirs: [".git", "node_modules", "vendor", "third_party", ".patternscout"]
                .into_iter()
                .map(String::from)
                .collect(),
            follow_symlinks: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative, `/`-separated.
    pub path: String,
    pub size: u64,
    pub is_text: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepoSnapshot {
    pub root: PathBuf,
    pub files: Vec<FileEntry>,
    pub tree_text: String,
    pub trimmed: bool,
    /// Problems hit while walking (e.g. symlink loops); the walk continues.
    pub warnings: Vec<String>,
}

impl RepoSnapshot {
    pub fn contains(&self, path: &str) -> bool {
        self.files.binary_search_by(|f| f.path.as_str().cmp(path)).is_ok()
    }

    pub fn name(&self) -> String {
        self.root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.root.display().to_string())
    }
}

/// Walk `root` and build a snapshot with a budgeted tree rendering.
pub fn scan_repo(root: &Path, config: &ScanConfig) -> Result<RepoSnapshot, ScanError> {
    let root = root
        .canonicalize()
        .ok()
        .filter(|p| p.is_dir())
        .ok_or_else(|| ScanError::BadRoot { path: root.to_path_buf() })?;
    fs::read_dir(&root).map_err(|_| ScanError::BadRoot { path: root.clone() })?;

    let ignore: BTreeSet<&str> = config.ignore_dirs.iter().map(String::as_str).collect();
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    let walker = WalkDir::new(&root)
        .follow_links(config.follow_symlinks)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            e.depth() == 0 || !(e.file_type().is_dir() && ignore.contains(e.file_name().to_string_lossy().as_ref()))
        });

    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                warnings.push(format!("skipped: {e}"));
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let Some(rel) = relative_path(&root, entry.path()) else {
            warnings.push(format!("skipped non-UTF-8 path {}", entry.path().display()));
            continue;
        };
        let size = entry.metadata().map(|m| m.len()).unwrap_or(0);
        let is_text = match sniff_text(entry.path()) {
            Ok(t) => t,
            Err(e) => {
                warnings.push(format!("skipped unreadable {rel}: {e}"));
                continue;
            }
        };
        files.push(FileEntry { path: rel, size, is_text });
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    files.dedup_by(|a, b| a.path == b.path);

    let (tree_text, trimmed) = render_tree(&files, config.tree_budget);
    Ok(RepoSnapshot {
        root,
        files,
        tree_text,
        trimmed,
        warnings,
    })
}

fn relative_path(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let mut parts = Vec::new();
    for c in rel.components() {
        match c {
            Component::Normal(s) => parts.push(s.to_str()?),
            _ => return None,
        }
    }
    Some(parts.join("/"))
}

fn sniff_text(path: &Path) -> std::io::Result<bool> {
    let mut buf = vec![0u8; BINARY_SNIFF_BYTES];
    let mut file = fs::File::open(path)?;
    let mut filled = 0;
    while filled < buf.len() {
        let n = file.read(&mut buf[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(!buf[..filled].contains(&0))
}

/// Paths in `snapshot` matched by any of `globs`, sorted and deduplicated.
pub fn match_globs(snapshot: &RepoSnapshot, globs: &[String]) -> Result<Vec<String>, GlobError> {
    let compiled = globs.iter().map(|g| Glob::parse(g)).collect::<Result<Vec<_>, _>>()?;
    Ok(snapshot
        .files
        .iter()
        .filter(|f| compiled.iter().any(|g| g.is_match(&f.path)))
        .map(|f| f.path.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileContent {
    pub path: String,
    pub text: String,
    pub truncated: bool,
    pub is_text: bool,
}

/// Read a file relative to `root`, keeping at most `limit` characters.
///
/// Over-long content keeps its head and ends with [`TRUNCATION_MARKER`], the
/// marker counted inside `limit`. Binary files come back empty with
/// `is_text = false`.
pub fn read_truncated(root: &Path, rel_path: &str, limit: usize) -> Result<FileContent, ScanError> {
    let rel = Path::new(rel_path);
    if rel_path.is_empty() || rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(ScanError::EscapesRoot(rel_path.to_string()));
    }
    let full = root.join(rel);
    let bytes = fs::read(&full).map_err(|source| ScanError::Io { path: full.clone(), source })?;
    let sniff = &bytes[..bytes.len().min(BINARY_SNIFF_BYTES)];
    if sniff.contains(&0) {
        return Ok(FileContent {
            path: rel_path.to_string(),
            text: String::new(),
            truncated: false,
            is_text: false,
        });
    }
    let text = String::from_utf8_lossy(&bytes);
    let (text, truncated) = truncate_chars(&text, limit.max(1));
    Ok(FileContent {
        path: rel_path.to_string(),
        text,
        truncated,
        is_text: true,
    })
}

fn truncate_chars(text: &str, limit: usize) -> (String, bool) {
    let Some((cut, _)) = text.char_indices().nth(limit) else {
        return (text.to_string(), false);
    };
    let marker_len = TRUNCATION_MARKER.chars().count();
    if limit <= marker_len {
        return (text[..cut].to_string(), true);
    }
    let keep = text.char_indices().nth(limit - marker_len).map_or(text.len(), |(i, _)| i);
    let mut out = String::with_capacity(keep + TRUNCATION_MARKER.len());
    out.push_str(&text[..keep]);
    out.push_str(TRUNCATION_MARKER);
    (out, true)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSummary {
    pub name: String,
    /// Lowercased extension (or `(none)`) to file count.
    pub language_histogram: BTreeMap<String, usize>,
    pub file_count: usize,
    pub readme_excerpt: String,
}

impl RepoSummary {
    /// Plain-text rendering used in prompts.
    pub fn render(&self) -> String {
        let mut hist: Vec<(&String, &usize)> = self.language_histogram.iter().collect();
        hist.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let hist = hist
            .iter()
            .map(|(ext, n)| format!("{ext}: {n}"))
            .collect::<Vec<_>>()
            .join(", ");
        let mut out = format!("Repository: {}\nFiles: {}\nExtensions: {}\n", self.name, self.file_count, hist);
        if !self.readme_excerpt.is_empty() {
            out.push_str("README excerpt:\n");
            out.push_str(&self.readme_excerpt);
            out.push('\n');
        }
        out
    }
}

pub fn summarize_repo(snapshot: &RepoSnapshot) -> RepoSummary {
    let mut language_histogram = BTreeMap::new();
    for f in &snapshot.files {
        let ext = Path::new(&f.path)
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .unwrap_or_else(|| "(none)".to_string());
        *language_histogram.entry(ext).or_insert(0) += 1;
    }

    let readme = snapshot.files.iter().find(|f| {
        !f.path.contains('/') && {
            let lower = f.path.to_lowercase();
            lower == "readme" || lower.starts_with("readme.")
        }
    });
    let readme_excerpt = readme
        .filter(|f| f.is_text)
        .and_then(|f| fs::read(snapshot.root.join(&f.path)).ok())
        .map(|bytes| crate::text::clip_chars(&String::from_utf8_lossy(&bytes), README_EXCERPT_CHARS))
        .unwrap_or_default();

    RepoSummary {
        name: snapshot.name(),
        language_histogram,
        file_count: snapshot.files.len(),
        readme_excerpt,
    }
}
