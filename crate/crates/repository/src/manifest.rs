//! The repository index: `<repo_url>/index.json`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub ruleset_id: String,
    pub version: String,
    /// Lowercase hex SHA-256 of the ruleset file.
    pub sha256: String,
    /// Relative to the manifest URL, or absolute.
    pub href: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub repo_id: String,
    pub rulesets: Vec<ManifestEntry>,
}

fn is_identifier(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_alphanumeric())
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

impl Manifest {
    /// Parses and checks a manifest; digests are normalized to lowercase.
    pub fn parse(bytes: &[u8]) -> Result<Self, String> {
        let mut m: Manifest = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (expected {MANIFEST_SCHEMA_VERSION})",
                m.schema_version
            ));
        }
        if !is_identifier(&m.repo_id) {
            return Err(format!("repo_id `{}` is not a valid identifier", m.repo_id));
        }
        let mut seen = HashSet::new();
        for e in &mut m.rulesets {
            if !is_identifier(&e.ruleset_id) {
                return Err(format!("ruleset_id `{}` is not a valid identifier", e.ruleset_id));
            }
            if !seen.insert(e.ruleset_id.clone()) {
                return Err(format!("duplicate ruleset_id `{}`", e.ruleset_id));
            }
            if e.sha256.len() != 64 || !e.sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(format!("ruleset `{}`: sha256 must be 64 hex characters", e.ruleset_id));
            }
            e.sha256.make_ascii_lowercase();
            if e.href.is_empty() {
                return Err(format!("ruleset `{}`: empty href", e.ruleset_id));
            }
        }
        Ok(m)
    }

    pub fn entry(&self, ruleset_id: &str) -> Option<&ManifestEntry> {
        self.rulesets.iter().find(|e| e.ruleset_id == ruleset_id)
    }
}
