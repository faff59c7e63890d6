//! Fetching manifests, rulesets and remote templates over HTTP.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use manners_core::{parse_ruleset, Diagnostic, Registry, RuleError, RuleSet, RuleSetKey};
use reqwest::header::{ETAG, IF_NONE_MATCH};
use reqwest::StatusCode;
use url::Url;

use crate::cache::{sha256_hex, Cache, CacheEntry};
use crate::manifest::{Manifest, ManifestEntry};

#[derive(Debug, thiserror::Error)]
pub enum RepoError {
    #[error("invalid repository URL `{url}`: {message}")]
    BadUrl { url: String, message: String },
    #[error("cannot reach {url}: {message}")]
    Network { url: String, message: String },
    #[error("{url} answered HTTP {status}")]
    Status { url: String, status: u16 },
    #[error("invalid manifest from {url}: {message}")]
    Schema { url: String, message: String },
    #[error("ruleset `{ruleset_id}` is not listed by {repo_url}")]
    NotListed { repo_url: String, ruleset_id: String },
    #[error("ruleset `{ruleset_id}` failed its integrity check: manifest says sha256 {expected}, received {actual}")]
    Integrity {
        ruleset_id: String,
        expected: String,
        actual: String,
    },
    #[error("ruleset `{ruleset_id}` is invalid: {source}")]
    RuleSet {
        ruleset_id: String,
        #[source]
        source: RuleError,
    },
    #[error("ruleset `{ruleset_id}` does not match its manifest entry: {message}")]
    Mismatch { ruleset_id: String, message: String },
}

impl RepoError {
    fn is_transport(&self) -> bool {
        matches!(self, RepoError::Network { .. } | RepoError::Status { .. })
    }
}

/// A value together with the non-fatal problems met while obtaining it.
#[derive(Debug, Clone)]
pub struct Fetched<T> {
    pub value: T,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub timeout: Duration,
    /// Memory-only cache when `None`.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(10),
            cache_dir: None,
        }
    }
}

/// Everything loaded from a set of repositories.
#[derive(Debug, Clone, Default)]
pub struct Synced {
    pub manifests: BTreeMap<String, Manifest>,
    pub rulesets: BTreeMap<RuleSetKey, Arc<RuleSet>>,
    /// Remote templates referenced by the loaded rules.
    pub templates: HashMap<String, Result<String, String>>,
    pub diagnostics: Vec<Diagnostic>,
}

pub struct RepoClient {
    http: reqwest::Client,
    cache: Cache,
}

fn manifest_url(repo_url: &str) -> Result<Url, RepoError> {
    let bad = |message: String| RepoError::BadUrl {
        url: repo_url.to_string(),
        message,
    };
    let mut base = Url::parse(repo_url).map_err(|e| bad(e.to_string()))?;
    if base.cannot_be_a_base() {
        return Err(bad("not a hierarchical URL".into()));
    }
    if !base.path().ends_with('/') {
        base.set_path(&format!("{}/", base.path()));
    }
    base.join("index.json").map_err(|e| bad(e.to_string()))
}

fn network(url: &Url, e: reqwest::Error) -> RepoError {
    RepoError::Network {
        url: url.to_string(),
        message: e.to_string(),
    }
}

impl RepoClient {
    pub fn new(options: ClientOptions) -> Self {
        let http = reqwest::Client::builder()
            .timeout(options.timeout)
            .user_agent(concat!("manners/", env!("CARGO_PKG_VERSION")))
            .build()
            .expect("HTTP client configuration is static");
        Self {
            http,
            cache: Cache::new(options.cache_dir),
        }
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    /// Fetches `<repo_url>/index.json`, conditionally when an ETag is
    /// cached. When the repository cannot be reached but a manifest is
    /// cached, that manifest is returned with a `repo-stale` diagnostic.
    pub async fn fetch_manifest(&self, repo_url: &str) -> Result<Fetched<Manifest>, RepoError> {
        let url = manifest_url(repo_url)?;
        let cached = self.cache.manifest(repo_url);
        match self.request_manifest(&url, cached.as_ref()).await {
            Ok((body, etag)) => {
                let manifest = Manifest::parse(&body).map_err(|message| RepoError::Schema {
                    url: url.to_string(),
                    message,
                })?;
                if let Err(e) = self.cache.store_manifest(repo_url, &body, etag.as_deref()) {
                    log::warn!("could not cache manifest of {repo_url}: {e}");
                }
                Ok(Fetched {
                    value: manifest,
                    diagnostics: Vec::new(),
                })
            }
            Err(e) if e.is_transport() => {
                let stale = cached.and_then(|(body, _)| Manifest::parse(&body).ok());
                match stale {
                    Some(manifest) => Ok(Fetched {
                        value: manifest,
                        diagnostics: vec![Diagnostic::new(
                            "repo-stale",
                            format!("{e}; using the cached manifest of {repo_url}"),
                        )],
                    }),
                    None => Err(e),
                }
            }
            Err(e) => Err(e),
        }
    }

    async fn request_manifest(
        &self,
        url: &Url,
        cached: Option<&(Vec<u8>, Option<String>)>,
    ) -> Result<(Vec<u8>, Option<String>), RepoError> {
        let mut req = self.http.get(url.clone());
        if let Some((_, Some(etag))) = cached {
            req = req.header(IF_NONE_MATCH, etag.as_str());
        }
        let resp = req.send().await.map_err(|e| network(url, e))?;
        if resp.status() == StatusCode::NOT_MODIFIED {
            if let Some((body, etag)) = cached {
                return Ok((body.clone(), etag.clone()));
            }
        }
        if !resp.status().is_success() {
            return Err(RepoError::Status {
                url: url.to_string(),
                status: resp.status().as_u16(),
            });
        }
        let etag = resp.headers().get(ETAG).and_then(|v| v.to_str().ok()).map(str::to_string);
        let body = resp.bytes().await.map_err(|e| network(url, e))?;
        Ok((body.to_vec(), etag))
    }

    /// Loads the ruleset listed by `entry`, from cache when the cached copy
    /// has the listed digest, otherwise over the network. Bytes are checked
    /// against the digest before parsing; mismatching bytes are
    /// quarantined and never parsed.
    pub async fn fetch_ruleset(
        &self,
        repo_url: &str,
        entry: &ManifestEntry,
        registry: &Registry,
    ) -> Result<RuleSet, RepoError> {
        let id = &entry.ruleset_id;
        let bytes = match self.cache.ruleset(repo_url, id) {
            Some(c) if c.sha256 == entry.sha256 && c.version == entry.version => c.bytes,
            _ => {
                let url = manifest_url(repo_url)?.join(&entry.href).map_err(|e| RepoError::BadUrl {
                    url: entry.href.clone(),
                    message: e.to_string(),
                })?;
                let resp = self.http.get(url.clone()).send().await.map_err(|e| network(&url, e))?;
                if !resp.status().is_success() {
                    return Err(RepoError::Status {
                        url: url.to_string(),
                        status: resp.status().as_u16(),
                    });
                }
                let etag = resp.headers().get(ETAG).and_then(|v| v.to_str().ok()).map(str::to_string);
                let bytes = resp.bytes().await.map_err(|e| network(&url, e))?.to_vec();
                let actual = sha256_hex(&bytes);
                if actual != entry.sha256 {
                    match self.cache.quarantine(repo_url, id, &bytes) {
                        Ok(Some(p)) => log::warn!("quarantined ruleset `{id}` from {url} at {}", p.display()),
                        Ok(None) => {}
                        Err(e) => log::warn!("could not quarantine ruleset `{id}`: {e}"),
                    }
                    return Err(RepoError::Integrity {
                        ruleset_id: id.clone(),
                        expected: entry.sha256.clone(),
                        actual,
                    });
                }
                let cached = CacheEntry {
                    repo_url: repo_url.to_string(),
                    ruleset_id: id.clone(),
                    version: entry.version.clone(),
                    bytes,
                    sha256: actual,
                    etag,
                    fetched_at: Utc::now(),
                };
                if let Err(e) = self.cache.store_ruleset(&cached) {
                    log::warn!("could not cache ruleset `{id}`: {e}");
                }
                cached.bytes
            }
        };
        let ruleset = parse_ruleset(&bytes, registry).map_err(|source| RepoError::RuleSet {
            ruleset_id: id.clone(),
            source,
        })?;
        if ruleset.id != *id || ruleset.version != entry.version {
            return Err(RepoError::Mismatch {
                ruleset_id: id.clone(),
                message: format!(
                    "file declares `{}` version `{}`, manifest lists `{id}` version `{}`",
                    ruleset.id, ruleset.version, entry.version
                ),
            });
        }
        Ok(ruleset)
    }

    /// Looks `ruleset_id` up in the repository's current manifest and loads it.
    pub async fn fetch_ruleset_by_id(
        &self,
        repo_url: &str,
        ruleset_id: &str,
        registry: &Registry,
    ) -> Result<Fetched<RuleSet>, RepoError> {
        let manifest = self.fetch_manifest(repo_url).await?;
        let entry = manifest.value.entry(ruleset_id).ok_or_else(|| RepoError::NotListed {
            repo_url: repo_url.to_string(),
            ruleset_id: ruleset_id.to_string(),
        })?;
        Ok(Fetched {
            value: self.fetch_ruleset(repo_url, entry, registry).await?,
            diagnostics: manifest.diagnostics,
        })
    }

    /// GETs `url` and returns the body of a successful response.
    pub async fn fetch_bytes(&self, url: &str) -> Result<Vec<u8>, RepoError> {
        let parsed = Url::parse(url).map_err(|e| RepoError::BadUrl {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        let resp = self.http.get(parsed.clone()).send().await.map_err(|e| network(&parsed, e))?;
        if !resp.status().is_success() {
            return Err(RepoError::Status {
                url: url.to_string(),
                status: resp.status().as_u16(),
            });
        }
        Ok(resp.bytes().await.map_err(|e| network(&parsed, e))?.to_vec())
    }

    pub async fn fetch_template(&self, url: &str) -> Result<String, String> {
        let bytes = self.fetch_bytes(url).await.map_err(|e| e.to_string())?;
        String::from_utf8(bytes).map_err(|_| format!("template {url} is not UTF-8"))
    }

    /// Fetches every URL in `urls`, recording failures as diagnostics.
    pub async fn fetch_templates(
        &self,
        urls: impl IntoIterator<Item = String>,
        diagnostics: &mut Vec<Diagnostic>,
    ) -> HashMap<String, Result<String, String>> {
        let mut out = HashMap::new();
        for url in urls {
            if out.contains_key(&url) {
                continue;
            }
            let fetched = self.fetch_template(&url).await;
            if let Err(e) = &fetched {
                diagnostics.push(Diagnostic::new("template-unavailable", format!("template {url}: {e}")));
            }
            out.insert(url, fetched);
        }
        out
    }

    /// Loads every ruleset of every repository plus the templates they
    /// reference. Never fails: each problem becomes a diagnostic and the
    /// affected repository or ruleset is left out.
    pub async fn sync(&self, repo_urls: &[String], registry: &Registry) -> Synced {
        let mut out = Synced::default();
        for repo_url in repo_urls {
            let manifest = match self.fetch_manifest(repo_url).await {
                Ok(m) => m,
                Err(e) => {
                    out.diagnostics.push(Diagnostic::new("repo-unavailable", e.to_string()));
                    continue;
                }
            };
            out.diagnostics.extend(manifest.diagnostics);
            for entry in &manifest.value.rulesets {
                match self.fetch_ruleset(repo_url, entry, registry).await {
                    Ok(rs) => {
                        out.rulesets
                            .insert(RuleSetKey::new(repo_url, &entry.ruleset_id), Arc::new(rs));
                    }
                    Err(e) => {
                        let code = match e {
                            RepoError::Integrity { .. } => "ruleset-integrity",
                            RepoError::RuleSet { .. } | RepoError::Mismatch { .. } => "ruleset-invalid",
                            _ => "ruleset-unavailable",
                        };
                        out.diagnostics.push(Diagnostic::new(code, format!("{repo_url}: {e}")));
                    }
                }
            }
            out.manifests.insert(repo_url.clone(), manifest.value);
        }
        let mut urls: Vec<String> = out.rulesets.values().flat_map(|rs| rs.template_urls()).collect();
        urls.sort();
        out.templates = self.fetch_templates(urls, &mut out.diagnostics).await;
        out
    }
}
