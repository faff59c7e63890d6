//! Shared proxy state: configuration, the loaded rulesets and the
//! subscription store.

use std::sync::Arc;

use arc_swap::ArcSwap;
use manners_core::rules::candidates;
use manners_core::validators::{CheckerPool, Services};
use manners_core::{merge, run_pipeline, Diagnostic, Merged, PipelineEnv, PipelineError, Registry, Subscription};
use manners_repo::{ClientOptions, RepoClient, SubscriptionStore, Synced};
use regex::Regex;

use crate::config::ProxyConfig;

/// Rulesets and pipeline services from one repository sync.
pub struct Loaded {
    pub synced: Synced,
    pub env: PipelineEnv,
}

pub struct Engine {
    pub config: ProxyConfig,
    pub store: SubscriptionStore,
    pub(crate) strict_pattern: Option<Regex>,
    registry: Registry,
    repo: RepoClient,
    loaded: ArcSwap<Loaded>,
}

impl Engine {
    /// Builds the engine with nothing loaded yet; call [`Engine::sync`].
    pub fn new(config: ProxyConfig, store: SubscriptionStore) -> Arc<Self> {
        let registry = Registry::builtin().with_checkers(config.checker_allowlist.keys().cloned());
        let repo = RepoClient::new(ClientOptions {
            timeout: config.repo_timeout(),
            cache_dir: config.cache_dir.clone(),
        });
        let strict_pattern = config
            .strict_save
            .as_ref()
            .map(|s| Regex::new(&s.endpoint_pattern).expect("validated with the config"));
        let loaded = ArcSwap::from_pointee(Loaded {
            synced: Synced::default(),
            env: env(&config, &registry, Default::default()),
        });
        Arc::new(Self {
            config,
            store,
            strict_pattern,
            registry,
            repo,
            loaded,
        })
    }

    /// Refreshes every configured repository and publishes the result.
    /// Requests in flight keep the snapshot they started with.
    pub async fn sync(&self) -> Vec<Diagnostic> {
        let synced = self.repo.sync(&self.config.repos, &self.registry).await;
        for d in &synced.diagnostics {
            log::warn!("{d}");
        }
        let diagnostics = synced.diagnostics.clone();
        let env = env(&self.config, &self.registry, synced.templates.clone());
        self.loaded.store(Arc::new(Loaded { synced, env }));
        diagnostics
    }

    pub fn loaded(&self) -> Arc<Loaded> {
        self.loaded.load_full()
    }

    /// Runs the pipeline with `subscription`'s rules. Missing rulesets
    /// are added to the report as diagnostics.
    pub fn annotate_for(
        &self,
        subscription: &Subscription,
        url: &str,
        body: &[u8],
        declared_encoding: Option<&str>,
        overlay_enabled: bool,
    ) -> Result<Merged, PipelineError> {
        let loaded = self.loaded();
        let (cands, missing) = candidates(subscription, &loaded.synced.rulesets);
        let (mut report, tree) = run_pipeline(url, body, declared_encoding, &cands, &loaded.env)?;
        report.diagnostics.splice(0..0, missing);
        Ok(merge(&tree, &report, overlay_enabled))
    }
}

fn env(
    config: &ProxyConfig,
    registry: &Registry,
    templates: std::collections::HashMap<String, Result<String, String>>,
) -> PipelineEnv {
    PipelineEnv {
        registry: registry.clone(),
        services: Services {
            templates,
            checkers: CheckerPool::new(config.checker_specs(), manners_core::validators::external::DEFAULT_MAX_CONCURRENT),
        },
        parse: Default::default(),
    }
}
