//! A running proxy in front of a mock origin, with its rules served by a
//! mock repository.

use std::sync::Arc;

use manners_core::doc::{DocTree, NodeKind};
use manners_core::{parse_html, ParseOptions, Report, Subscription, SubscriptionEntry};
use manners_proxy::{Engine, ProxyConfig, RunningServer};
use manners_repo::SubscriptionStore;

use crate::fixtures::{publish, Published};
use crate::mock::MockServer;

pub struct ProxyHarness {
    pub origin: MockServer,
    pub repo: MockServer,
    pub repo_url: String,
    pub engine: Arc<Engine>,
    pub server: RunningServer,
    pub client: reqwest::Client,
    _dir: tempfile::TempDir,
}

/// Subscription enabling each of `rulesets` from `repo_url`.
pub fn subscribe(repo_url: &str, rulesets: &[&str]) -> Subscription {
    Subscription {
        user_id: String::new(),
        entries: rulesets.iter().map(|id| SubscriptionEntry::new(repo_url, *id)).collect(),
    }
}

impl ProxyHarness {
    /// Publishes `rulesets`, subscribes the default user to all of them,
    /// lets `configure` adjust the config, syncs and starts listening.
    pub async fn start(rulesets: &[Published], configure: impl FnOnce(&mut ProxyConfig)) -> Self {
        let origin = MockServer::start();
        let repo = MockServer::start();
        let repo_url = publish(&repo, "/repo", rulesets);
        let dir = tempfile::tempdir().expect("tempdir");
        let ids: Vec<&str> = rulesets.iter().map(|p| p.id.as_str()).collect();
        let mut config = ProxyConfig {
            listen_address: "127.0.0.1:0".parse().unwrap(),
            upstream: Some(origin.url("")),
            repos: vec![repo_url.clone()],
            default_subscription: subscribe(&repo_url, &ids),
            overlay_enabled: false,
            cache_dir: Some(dir.path().join("cache")),
            subscriptions_path: Some(dir.path().join("subscriptions.json")),
            sync_interval_secs: 0,
            ..ProxyConfig::default()
        };
        configure(&mut config);
        config.validate().expect("harness config is valid");
        let store = SubscriptionStore::open(
            config.subscriptions_path.clone().unwrap(),
            config.default_subscription.clone(),
        )
        .expect("subscription store");
        let engine = Engine::new(config, store);
        let diagnostics = engine.sync().await;
        assert!(diagnostics.is_empty(), "repository sync: {diagnostics:?}");
        let server = manners_proxy::start(Arc::clone(&engine)).await.expect("proxy starts");
        let client = reqwest::Client::builder()
            .no_proxy()
            .redirect(reqwest::redirect::Policy::none())
            .build()
            .unwrap();
        Self {
            origin,
            repo,
            repo_url,
            engine,
            server,
            client,
            _dir: dir,
        }
    }

    pub fn url(&self, path: &str) -> String {
        self.server.url(path)
    }

    /// GET through the proxy, as `uid` when given.
    pub async fn get(&self, path: &str, uid: Option<&str>) -> reqwest::Response {
        let mut req = self.client.get(self.url(path));
        if let Some(uid) = uid {
            req = req.header("cookie", format!("{}={uid}", manners_proxy::UID_COOKIE));
        }
        req.send().await.expect("proxy answers")
    }
}

/// `X-Manners-Findings` as a number, if present.
pub fn findings(resp: &reqwest::Response) -> Option<i64> {
    resp.headers()
        .get(manners_proxy::FINDINGS_HEADER)
        .map(|v| v.to_str().unwrap().parse().unwrap())
}

fn parse(html: &[u8]) -> DocTree {
    parse_html(html, Some("utf-8"), "http://delivered.test/", &ParseOptions::default()).expect("delivered page parses")
}

/// Number of distinct annotation ids carried by marker elements.
pub fn marker_ids(html: &[u8]) -> Vec<String> {
    let tree = parse(html);
    let mut ids: Vec<String> = tree
        .ids()
        .filter_map(|n| tree.element(n)?.attr("data-manners-id").map(str::to_string))
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

/// The report embedded in a delivered page, if any.
pub fn embedded_report(html: &[u8]) -> Option<Report> {
    let tree = parse(html);
    let node = tree
        .ids()
        .find(|&n| tree.element(n).and_then(|e| e.attr("id")) == Some(manners_core::annotator::REPORT_ELEMENT_ID))?;
    let json: String = tree
        .children(node)
        .iter()
        .filter_map(|&c| match tree.kind(c) {
            NodeKind::Text(t) => Some(t.as_str()),
            _ => None,
        })
        .collect();
    serde_json::from_str(&json).ok()
}
