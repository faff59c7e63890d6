//! Ruleset and manifest documents for tests, and a helper that publishes
//! them as a repository on a [`MockServer`].

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::mock::{MockServer, Route};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A regex-filter rule firing on every URL matching `url_pattern`.
pub fn regex_rule(id: &str, pattern: &str, url_pattern: &str) -> Value {
    json!({
        "id": id,
        "title": format!("rule {id}"),
        "description": "test rule",
        "severity": "warning",
        "firing": {"url_pattern": url_pattern},
        "active": {"kind": "regex-filter", "params": {"pattern": pattern, "message": format!("{id} matched")}}
    })
}

pub fn ruleset_json(id: &str, version: &str, rules: &[Value]) -> Vec<u8> {
    let doc = json!({"schema_version": 1, "id": id, "version": version, "title": format!("ruleset {id}"), "rules": rules});
    serde_json::to_vec_pretty(&doc).expect("json")
}

/// A published ruleset file: id, version and exact bytes.
#[derive(Debug, Clone)]
pub struct Published {
    pub id: String,
    pub version: String,
    pub bytes: Vec<u8>,
}

impl Published {
    pub fn new(id: &str, version: &str, rules: &[Value]) -> Self {
        Self {
            id: id.into(),
            version: version.into(),
            bytes: ruleset_json(id, version, rules),
        }
    }
}

/// Manifest listing `rulesets` with hrefs `rulesets/<id>-<version>.json`.
pub fn manifest_json(repo_id: &str, rulesets: &[Published]) -> Vec<u8> {
    let entries: Vec<Value> = rulesets
        .iter()
        .map(|p| {
            json!({
                "ruleset_id": p.id,
                "version": p.version,
                "sha256": sha256_hex(&p.bytes),
                "href": href(p),
                "title": format!("ruleset {}", p.id),
            })
        })
        .collect();
    serde_json::to_vec_pretty(&json!({"schema_version": 1, "repo_id": repo_id, "rulesets": entries})).expect("json")
}

fn href(p: &Published) -> String {
    format!("rulesets/{}-{}.json", p.id, p.version)
}

/// Serves a repository under `base` (for example `/repo`) and returns its
/// URL. The manifest carries an ETag derived from its digest.
pub fn publish(server: &MockServer, base: &str, rulesets: &[Published]) -> String {
    let manifest = manifest_json("test-repo", rulesets);
    let etag = format!("\"{}\"", &sha256_hex(&manifest)[..16]);
    server.route(&format!("{base}/index.json"), Route::json(manifest).etag(&etag));
    for p in rulesets {
        server.route(&format!("{base}/{}", href(p)), Route::json(p.bytes.clone()));
    }
    server.url(base)
}

/// Path of a published ruleset file under `base`.
pub fn ruleset_path(base: &str, p: &Published) -> String {
    format!("{base}/{}", href(p))
}
