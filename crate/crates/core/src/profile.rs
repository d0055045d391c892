//! Pattern profiles: the natural-language definition of each pattern.
//!
//! One YAML file per pattern with the fields `name`, `description`,
//! `catalog_url`, `globs`, `keywords` and `examples`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{CallTag, LlmClient, ProfileGenResponse, ProviderError, SchemaId};
use crate::scanner::Glob;

pub const MAX_DESCRIPTION_CHARS: usize = 2_000;
pub const MAX_EXAMPLE_CHARS: usize = 50_000;
pub const MAX_EXAMPLES: usize = 10;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: invalid `{field}`: {message}")]
    Schema {
        file: String,
        field: String,
        message: String,
    },
    #[error("pattern `{name}` is defined in both {first} and {second}")]
    Duplicate { name: String, first: String, second: String },
    #[error("no profile files in {0}")]
    Empty(PathBuf),
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternProfile {
    pub name: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog_url: Option<String>,
    pub globs: Vec<String>,
    pub keywords: Vec<String>,
    #[serde(default)]
    pub examples: Vec<String>,
}

/// Every field optional so that a missing one can be reported by name.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    name: Option<String>,
    description: Option<String>,
    catalog_url: Option<String>,
    globs: Option<Vec<String>>,
    keywords: Option<Vec<String>>,
    examples: Option<Vec<String>>,
}

/// A field-level problem, before it is attached to a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

fn violation(field: &'static str, message: impl Into<String>) -> Violation {
    Violation {
        field,
        message: message.into(),
    }
}

impl PatternProfile {
    /// No example instances: the embedding signal is unavailable.
    pub fn is_degraded(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn validate(&self) -> Result<(), Violation> {
        if self.name.trim().is_empty() {
            return Err(violation("name", "must be non-empty"));
        }
        let desc_len = self.description.chars().count();
        if self.description.trim().is_empty() || desc_len > MAX_DESCRIPTION_CHARS {
            return Err(violation(
                "description",
                format!("must be 1..={MAX_DESCRIPTION_CHARS} characters, got {desc_len}"),
            ));
        }
        if self.globs.is_empty() {
            return Err(violation("globs", "needs at least one entry"));
        }
        for g in &self.globs {
            Glob::parse(g).map_err(|e| violation("globs", e.to_string()))?;
        }
        if self.keywords.is_empty() {
            return Err(violation("keywords", "needs at least one entry"));
        }
        let mut seen = BTreeSet::new();
        for k in &self.keywords {
            if k.trim().is_empty() {
                return Err(violation("keywords", "entries must be non-empty"));
            }
            if *k != k.to_lowercase() || k.trim() != k {
                return Err(violation("keywords", format!("`{k}` is not in lowercase canonical form")));
            }
            if k.contains(',') {
                return Err(violation("keywords", format!("`{k}` contains a comma")));
            }
            if !seen.insert(k.as_str()) {
                return Err(violation("keywords", format!("duplicate keyword `{k}`")));
            }
        }
        if self.examples.len() > MAX_EXAMPLES {
            return Err(violation("examples", format!("at most {MAX_EXAMPLES} entries")));
        }
        if let Some(i) = self.examples.iter().position(|e| e.chars().count() > MAX_EXAMPLE_CHARS) {
            return Err(violation(
                "examples",
                format!("entry {i} exceeds {MAX_EXAMPLE_CHARS} characters"),
            ));
        }
        Ok(())
    }

    /// Parse and validate one profile document; `file` labels errors.
    pub fn from_yaml(text: &str, file: &str) -> Result<Self, ProfileError> {
        let schema = |field: &str, message: String| ProfileError::Schema {
            file: file.to_string(),
            field: field.to_string(),
            message,
        };
        let raw: RawProfile = serde_yaml::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("unknown field"))
                .unwrap_or("document")
                .to_string();
            schema(&field, msg)
        })?;
        let missing = |field: &str| schema(field, "missing required field".to_string());
        let profile = PatternProfile {
            name: raw.name.ok_or_else(|| missing("name"))?,
            description: raw.description.ok_or_else(|| missing("description"))?,
            catalog_url: raw.catalog_url,
            globs: raw.globs.ok_or_else(|| missing("globs"))?,
            keywords: raw.keywords.ok_or_else(|| missing("keywords"))?,
            examples: raw.examples.unwrap_or_default(),
        };
        profile.validate().map_err(|v| schema(v.field, v.message))?;
        Ok(profile)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("profiles serialize")
    }

    /// File name used when saving: lowercase, dash-separated.
    pub fn file_stem(&self) -> String {
        let mut out = String::new();
        for c in self.name.chars() {
            if c.is_alphanumeric() {
                out.extend(c.to_lowercase());
            } else if !out.ends_with('-') && !out.is_empty() {
                out.push('-');
            }
        }
        out.trim_end_matches('-').to_string()
    }
}

/// Load every `*.yaml` / `*.yml` profile in `dir`, sorted by name.
pub fn load_profiles(dir: &Path) -> Result<Vec<PatternProfile>, ProfileError> {
    let io = |source| ProfileError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("yaml" | "yml")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(ProfileError::Empty(dir.to_path_buf()));
    }
    let docs = files
        .iter()
        .map(|p| {
            fs::read_to_string(p)
                .map(|text| (p.display().to_string(), text))
                .map_err(|source| ProfileError::Io {
                    path: p.clone(),
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    collect_profiles(docs)
}

fn collect_profiles(docs: Vec<(String, String)>) -> Result<Vec<PatternProfile>, ProfileError> {
    let mut by_name: BTreeMap<String, (String, PatternProfile)> = BTreeMap::new();
    for (file, text) in docs {
        let profile = PatternProfile::from_yaml(&text, &file)?;
        if let Some((first, _)) = by_name.get(&profile.name) {
            return Err(ProfileError::Duplicate {
                name: profile.name,
                first: first.clone(),
                second: file,
            });
        }
        by_name.insert(profile.name.clone(), (file, profile));
    }
    Ok(by_name.into_values().map(|(_, p)| p).collect())
}

/// Write `profile` to `dir/<file_stem>.yaml` and return the path.
pub fn save_profile(profile: &PatternProfile, dir: &Path) -> Result<PathBuf, ProfileError> {
    profile.validate().map_err(|v| ProfileError::Schema {
        file: profile.name.clone(),
        field: v.field.to_string(),
        message: v.message,
    })?;
    fs::create_dir_all(dir).map_err(|source| ProfileError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(format!("{}.yaml", profile.file_stem()));
    fs::write(&path, profile.to_yaml()).map_err(|source| ProfileError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

const BUILTIN: &[(&str, &str)] = &[
    ("3rd-party-registration.yaml", include_str!("../../../profiles/3rd-party-registration.yaml")),
    ("multiple-service-instances-per-host.yaml", include_str!("../../../profiles/multiple-service-instances-per-host.yaml")),
    ("server-side-service-discovery.yaml", include_str!("../../../profiles/server-side-service-discovery.yaml")),
    ("service-deployment-platform.yaml", include_str!("../../../profiles/service-deployment-platform.yaml")),
    ("service-instance-per-container.yaml", include_str!("../../../profiles/service-instance-per-container.yaml")),
    ("service-instance-per-vm.yaml", include_str!("../../../profiles/service-instance-per-vm.yaml")),
    ("service-mesh.yaml", include_str!("../../../profiles/service-mesh.yaml")),
    ("service-registry.yaml", include_str!("../../../profiles/service-registry.yaml")),
    ("single-service-instance-per-host.yaml", include_str!("../../../profiles/single-service-instance-per-host.yaml")),
];

/// The nine microservice infrastructure pattern profiles shipped in `profiles/`.
pub fn builtin_profiles() -> Vec<PatternProfile> {
    collect_profiles(BUILTIN.iter().map(|(f, t)| (f.to_string(), t.to_string())).collect())
        .expect("built-in profiles are valid")
}

/// Ask the provider to draft a profile from a name, description and
/// catalog link. The draft should be reviewed before use.
pub fn generate_profile(
    name: &str,
    description: &str,
    catalog_url: &str,
    client: &LlmClient,
) -> Result<PatternProfile, ProfileError> {
    if name.trim().is_empty() {
        return Err(ProfileError::Precondition("pattern name must be non-empty".into()));
    }
    if description.trim().is_empty() {
        return Err(ProfileError::Precondition("pattern description must be non-empty".into()));
    }
    let mut vars = BTreeMap::new();
    vars.insert("name".to_string(), name.trim().to_string());
    vars.insert("description".to_string(), description.trim().to_string());
    vars.insert("catalog_url".to_string(), catalog_url.trim().to_string());
    let request = client.request(SchemaId::ProfileGen, vars)?;
    let tag = CallTag {
        pattern: Some(name.trim().to_string()),
        ..CallTag::default()
    };
    let draft: ProfileGenResponse = client.chat(&request, &tag)?;

    let mut keywords: Vec<String> = Vec::new();
    for k in draft.keywords {
        let k = k.trim().to_lowercase().replace(',', " ");
        if !k.is_empty() && !keywords.contains(&k) {
            keywords.push(k);
        }
    }
    let mut examples = draft.examples;
    examples.truncate(MAX_EXAMPLES);
    let examples = examples
        .into_iter()
        .map(|e| crate::text::clip_chars(&e, MAX_EXAMPLE_CHARS))
        .collect();

    let profile = PatternProfile {
        name: name.trim().to_string(),
        description: description.trim().to_string(),
        catalog_url: Some(catalog_url.trim().to_string()).filter(|u| !u.is_empty()),
        globs: draft.globs,
        keywords,
        examples,
    };
    profile.validate().map_err(|v| ProfileError::Schema {
        file: "<generated>".into(),
        field: v.field.to_string(),
        message: v.message,
    })?;
    Ok(profile)
}
