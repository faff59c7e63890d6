//! Per-user subscriptions persisted as one JSON file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use manners_core::rules::SubscriptionError;
use manners_core::Subscription;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("subscription store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("subscription store {path} is not valid JSON: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("invalid subscription: {0}")]
    Invalid(#[from] SubscriptionError),
}

type Snapshot = BTreeMap<String, Subscription>;

/// Maps user ids to subscriptions. Readers see a consistent snapshot and
/// never block; writers are serialized and replace the file atomically.
pub struct SubscriptionStore {
    path: Option<PathBuf>,
    default: Subscription,
    snapshot: ArcSwap<Snapshot>,
    writer: Mutex<()>,
}

impl SubscriptionStore {
    /// Opens `path`, treating a missing file as empty.
    pub fn open(path: impl Into<PathBuf>, default: Subscription) -> Result<Self, StoreError> {
        let path = path.into();
        let map = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Snapshot::new(),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        Ok(Self {
            path: Some(path),
            default,
            snapshot: ArcSwap::from_pointee(map),
            writer: Mutex::new(()),
        })
    }

    /// A store that is never written to disk.
    pub fn in_memory(default: Subscription) -> Self {
        Self {
            path: None,
            default,
            snapshot: ArcSwap::from_pointee(Snapshot::new()),
            writer: Mutex::new(()),
        }
    }

    /// The user's subscription, or the default one if none is stored.
    pub fn get(&self, user_id: &str) -> Subscription {
        let mut sub = self
            .snapshot
            .load()
            .get(user_id)
            .cloned()
            .unwrap_or_else(|| self.default.clone());
        sub.user_id = user_id.to_string();
        sub
    }

    pub fn contains(&self, user_id: &str) -> bool {
        self.snapshot.load().contains_key(user_id)
    }

    /// Validates and stores `sub` for `user_id`, durably before returning.
    pub fn set(&self, user_id: &str, mut sub: Subscription) -> Result<Subscription, StoreError> {
        sub.validate()?;
        sub.user_id = user_id.to_string();
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let mut next = Snapshot::clone(&self.snapshot.load());
        next.insert(user_id.to_string(), sub.clone());
        if let Some(path) = &self.path {
            let bytes = serde_json::to_vec_pretty(&next).expect("subscriptions serialize");
            write_atomic(path, &bytes).map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
        }
        self.snapshot.store(Arc::new(next));
        Ok(sub)
    }

    pub fn users(&self) -> Vec<String> {
        self.snapshot.load().keys().cloned().collect()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
