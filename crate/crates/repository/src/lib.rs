//! Rule repositories: manifest and ruleset fetching with digest
//! verification and caching, plus the per-user subscription store.

mod cache;
mod client;
mod manifest;
mod store;

pub use cache::{sha256_hex, Cache, CacheEntry};
pub use client::{ClientOptions, Fetched, RepoClient, RepoError, Synced};
pub use manifest::{Manifest, ManifestEntry, MANIFEST_SCHEMA_VERSION};
pub use store::{StoreError, SubscriptionStore};
