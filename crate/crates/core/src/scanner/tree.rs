//! Indented file-tree rendering with budgeted trimming.
//!
//! Format: one entry per line, two spaces of indent per depth, directories
//! suffixed with `/`. A pruned directory renders as `name/ … (+N files)` and
//! a cut-off tail as `… (+N files)` at the indent of the level it belongs to.

use std::collections::BTreeMap;

use super::FileEntry;

/// Smallest accepted tree budget, in characters.
pub const MIN_TREE_BUDGET: usize = 1_000;

const ELLIPSIS: &str = "…";

#[derive(Debug, Default)]
struct DirNode {
    dirs: BTreeMap<String, DirNode>,
    files: Vec<String>,
    /// Files in this directory and all descendants.
    file_count: usize,
    collapsed: bool,
}

impl DirNode {
    fn insert(&mut self, path: &str) {
        self.file_count += 1;
        match path.split_once('/') {
            Some((dir, rest)) => self.dirs.entry(dir.to_string()).or_default().insert(rest),
            None => self.files.push(path.to_string()),
        }
    }

    /// Rendered size of this directory's children at `depth`.
    fn body_len(&self, depth: usize) -> usize {
        let indent = 2 * depth;
        let dirs: usize = self
            .dirs
            .iter()
            .map(|(name, child)| child.line_len(name, depth))
            .sum();
        let files: usize = self.files.iter().map(|f| indent + f.chars().count() + 1).sum();
        dirs + files
    }

    /// Rendered size of this directory (header line plus body) at `depth`.
    fn line_len(&self, name: &str, depth: usize) -> usize {
        if self.collapsed {
            collapsed_line(name, self.file_count, depth).chars().count()
        } else {
            2 * depth + name.chars().count() + 2 + self.body_len(depth + 1)
        }
    }

    fn render(&self, depth: usize, out: &mut Vec<(String, usize)>) {
        let indent = "  ".repeat(depth);
        for (name, child) in &self.dirs {
            if child.collapsed {
                out.push((collapsed_line(name, child.file_count, depth), child.file_count));
            } else {
                out.push((format!("{indent}{name}/\n"), 0));
                child.render(depth + 1, out);
            }
        }
        for file in &self.files {
            out.push((format!("{indent}{file}\n"), 1));
        }
    }

    fn collect_dirs(&mut self, depth: usize, prefix: &str, out: &mut Vec<(usize, usize, String)>) {
        for (name, child) in self.dirs.iter_mut() {
            let path = format!("{prefix}{name}/");
            child.collect_dirs(depth + 1, &path, out);
            out.push((depth, child.file_count, path));
        }
    }

    fn get_mut(&mut self, dir_path: &str) -> Option<&mut DirNode> {
        let mut node = self;
        for part in dir_path.trim_end_matches('/').split('/') {
            node = node.dirs.get_mut(part)?;
        }
        Some(node)
    }
}

fn collapsed_line(name: &str, count: usize, depth: usize) -> String {
    format!("{}{name}/ {ELLIPSIS} (+{count} files)\n", "  ".repeat(depth))
}

fn tail_line(count: usize) -> String {
    format!("{ELLIPSIS} (+{count} files)\n")
}

/// Render `files` as an indented tree no longer than `char_budget` characters.
///
/// Budgets below [`MIN_TREE_BUDGET`] are raised to it. Returns the text and
/// whether anything was elided.
pub fn render_tree(files: &[FileEntry], char_budget: usize) -> (String, bool) {
    let budget = char_budget.max(MIN_TREE_BUDGET);
    let mut root = DirNode::default();
    for f in files {
        root.insert(&f.path);
    }

    let mut total = root.body_len(0);
    let mut trimmed = false;

    if total > budget {
        // Deepest first, then largest, then path order.
        let mut dirs = Vec::new();
        root.collect_dirs(0, "", &mut dirs);
        dirs.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));

        for (depth, _, path) in dirs {
            if total <= budget {
                break;
            }
            let name = path.trim_end_matches('/').rsplit('/').next().unwrap_or_default().to_string();
            let node = root.get_mut(&path).expect("directory collected from the same tree");
            let before = node.line_len(&name, depth);
            node.collapsed = true;
            let after = node.line_len(&name, depth);
            total = total - before + after;
            trimmed = true;
        }
    }

    let mut lines = Vec::new();
    root.render(0, &mut lines);

    if total <= budget {
        return (lines.into_iter().map(|(l, _)| l).collect(), trimmed);
    }

    // Every directory is pruned and the top level alone is still too long:
    // keep a prefix of lines and summarize the rest.
    let total_files: usize = lines.iter().map(|(_, n)| n).sum();
    let mut out = String::new();
    let mut used = 0;
    let mut shown = 0;
    for (line, count) in &lines {
        let len = line.chars().count();
        let reserve = tail_line(total_files - shown - count).chars().count();
        if used + len + reserve > budget {
            break;
        }
        out.push_str(line);
        used += len;
        shown += count;
    }
    out.push_str(&tail_line(total_files - shown));
    (out, true)
}

/// Recover the file paths listed in a rendered tree. Pruned directories and
/// tail summaries contribute nothing.
pub fn parse_tree_paths(tree_text: &str) -> Vec<String> {
    let mut stack: Vec<String> = Vec::new();
    let mut paths = Vec::new();
    for line in tree_text.lines() {
        let content = line.trim_start_matches(' ');
        let depth = (line.len() - content.len()) / 2;
        if content.is_empty() || content.starts_with(ELLIPSIS) {
            continue;
        }
        stack.truncate(depth);
        if content.contains(&format!("/ {ELLIPSIS} (+")) {
            continue;
        }
        if let Some(dir) = content.strip_suffix('/') {
            stack.push(dir.to_string());
        } else {
            let mut path = stack.join("/");
            if !path.is_empty() {
                path.push('/');
            }
            path.push_str(content);
            paths.push(path);
        }
    }
    paths
}
