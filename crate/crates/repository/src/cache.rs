//! Two-level (memory, then disk) cache of manifests and ruleset files.
//!
//! Disk layout under the cache directory, one directory per repository:
//!
//! ```text
//! <cache>/<first 16 hex of sha256(repo_url)>/
//!     repo_url                  the repository URL, for humans
//!     index.json                last manifest body
//!     index.etag                its ETag, if the server sent one
//!     rulesets/<id>.json        ruleset bytes, digest-verified
//!     rulesets/<id>.meta.json   CacheEntry metadata
//!     quarantine/<id>-<sha>.json  bytes that failed verification
//! ```
//!
//! Files are replaced atomically (write to a temporary file, then rename).

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A verified ruleset file as cached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub repo_url: String,
    pub ruleset_id: String,
    pub version: String,
    #[serde(skip)]
    pub bytes: Vec<u8>,
    pub sha256: String,
    pub etag: Option<String>,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Default)]
pub struct Cache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<(String, String), Vec<u8>>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().expect("cache paths have a parent");
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl Cache {
    /// Memory-only when `dir` is `None`.
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self {
            dir,
            memory: Mutex::default(),
        }
    }

    pub fn repo_dir(&self, repo_url: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(&sha256_hex(repo_url.as_bytes())[..16]))
    }

    fn read(&self, repo_url: &str, rel: &str) -> Option<Vec<u8>> {
        let key = (repo_url.to_string(), rel.to_string());
        if let Some(b) = self.memory.lock().unwrap().get(&key) {
            return Some(b.clone());
        }
        let bytes = fs::read(self.repo_dir(repo_url)?.join(rel)).ok()?;
        self.memory.lock().unwrap().insert(key, bytes.clone());
        Some(bytes)
    }

    /// Writes through to disk; the memory copy is updated only on success.
    fn write(&self, repo_url: &str, rel: &str, bytes: &[u8]) -> io::Result<()> {
        if let Some(dir) = self.repo_dir(repo_url) {
            let marker = dir.join("repo_url");
            if !marker.exists() {
                write_atomic(&marker, repo_url.as_bytes())?;
            }
            write_atomic(&dir.join(rel), bytes)?;
        }
        self.memory
            .lock()
            .unwrap()
            .insert((repo_url.to_string(), rel.to_string()), bytes.to_vec());
        Ok(())
    }

    fn remove(&self, repo_url: &str, rel: &str) {
        self.memory.lock().unwrap().remove(&(repo_url.to_string(), rel.to_string()));
        if let Some(dir) = self.repo_dir(repo_url) {
            let _ = fs::remove_file(dir.join(rel));
        }
    }

    /// Last stored manifest body and ETag.
    pub fn manifest(&self, repo_url: &str) -> Option<(Vec<u8>, Option<String>)> {
        let body = self.read(repo_url, "index.json")?;
        let etag = self
            .read(repo_url, "index.etag")
            .and_then(|b| String::from_utf8(b).ok())
            .filter(|s| !s.is_empty());
        Some((body, etag))
    }

    pub fn store_manifest(&self, repo_url: &str, body: &[u8], etag: Option<&str>) -> io::Result<()> {
        // ETag first: a crash in between leaves a stale tag, which only costs a refetch.
        match etag {
            Some(t) => self.write(repo_url, "index.etag", t.as_bytes())?,
            None => self.remove(repo_url, "index.etag"),
        }
        self.write(repo_url, "index.json", body)
    }

    /// A cached ruleset, only if its bytes still hash to the recorded digest.
    pub fn ruleset(&self, repo_url: &str, ruleset_id: &str) -> Option<CacheEntry> {
        let meta = self.read(repo_url, &format!("rulesets/{ruleset_id}.meta.json"))?;
        let mut entry: CacheEntry = serde_json::from_slice(&meta).ok()?;
        entry.bytes = self.read(repo_url, &format!("rulesets/{ruleset_id}.json"))?;
        (entry.repo_url == repo_url && sha256_hex(&entry.bytes) == entry.sha256).then_some(entry)
    }

    pub fn store_ruleset(&self, entry: &CacheEntry) -> io::Result<()> {
        debug_assert_eq!(sha256_hex(&entry.bytes), entry.sha256);
        let id = &entry.ruleset_id;
        self.write(&entry.repo_url, &format!("rulesets/{id}.json"), &entry.bytes)?;
        let meta = serde_json::to_vec_pretty(entry).expect("cache entries serialize");
        self.write(&entry.repo_url, &format!("rulesets/{id}.meta.json"), &meta)
    }

    /// Keeps rejected bytes for inspection; returns where they went.
    pub fn quarantine(&self, repo_url: &str, ruleset_id: &str, bytes: &[u8]) -> io::Result<Option<PathBuf>> {
        let Some(dir) = self.repo_dir(repo_url) else { return Ok(None) };
        let path = dir
            .join("quarantine")
            .join(format!("{ruleset_id}-{}.json", &sha256_hex(bytes)[..16]));
        write_atomic(&path, bytes)?;
        Ok(Some(path))
    }
}
