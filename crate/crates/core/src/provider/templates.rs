//! Prompt templates with `{{name}}` placeholders.
//!
//! Each response kind has `<kind>.system.txt` and `<kind>.user.txt`; re-asks
//! use `repair.user.txt`. The shipped set is compiled in and any file found
//! in an override directory replaces its built-in counterpart.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{ProviderError, SchemaId};

const BUILTIN: &[(&str, &str)] = &[
    ("tree_filter.system.txt", include_str!("../../templates/tree_filter.system.txt")),
    ("tree_filter.user.txt", include_str!("../../templates/tree_filter.user.txt")),
    ("plan.system.txt", include_str!("../../templates/plan.system.txt")),
    ("plan.user.txt", include_str!("../../templates/plan.user.txt")),
    ("investigation.system.txt", include_str!("../../templates/investigation.system.txt")),
    ("investigation.user.txt", include_str!("../../templates/investigation.user.txt")),
    ("deliberation.system.txt", include_str!("../../templates/deliberation.system.txt")),
    ("deliberation.user.txt", include_str!("../../templates/deliberation.user.txt")),
    ("profile_gen.system.txt", include_str!("../../templates/profile_gen.system.txt")),
    ("profile_gen.user.txt", include_str!("../../templates/profile_gen.user.txt")),
    ("repair.user.txt", include_str!("../../templates/repair.user.txt")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    files: BTreeMap<String, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            files: BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Self::default()
    }

    /// Built-ins overlaid with any same-named files from `dir`.
    pub fn load(dir: &Path) -> Result<Self, ProviderError> {
        let mut t = Self::default();
        for name in BUILTIN.iter().map(|(k, _)| *k) {
            let path = dir.join(name);
            if path.is_file() {
                let body = fs::read_to_string(&path)
                    .map_err(|e| ProviderError::Template(format!("{}: {e}", path.display())))?;
                t.files.insert(name.to_string(), body);
            }
        }
        Ok(t)
    }

    pub fn system(&self, schema: SchemaId, vars: &BTreeMap<String, String>) -> Result<String, ProviderError> {
        self.render(&format!("{}.system.txt", schema.as_str()), vars)
    }

    pub fn user(&self, schema: SchemaId, vars: &BTreeMap<String, String>) -> Result<String, ProviderError> {
        self.render(&format!("{}.user.txt", schema.as_str()), vars)
    }

    pub fn repair(&self, vars: &BTreeMap<String, String>) -> Result<String, ProviderError> {
        self.render("repair.user.txt", vars)
    }

    fn render(&self, name: &str, vars: &BTreeMap<String, String>) -> Result<String, ProviderError> {
        let body = self
            .files
            .get(name)
            .ok_or_else(|| ProviderError::Template(format!("no template named {name}")))?;
        render(body, vars).map_err(|e| ProviderError::Template(format!("{name}: {e}")))
    }
}

/// Substitute `{{key}}` placeholders in one pass; substituted text is not
/// rescanned.
pub fn render(template: &str, vars: &BTreeMap<String, String>) -> Result<String, String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| "unterminated placeholder".to_string())?;
        let key = after[..end].trim();
        let value = vars.get(key).ok_or_else(|| format!("missing value for placeholder `{key}`"))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}
