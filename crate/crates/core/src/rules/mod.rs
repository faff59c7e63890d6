//! Rules, rulesets and the decision of which rules fire on a page.

mod parse;
mod subscription;

use std::fmt;
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::doc::{DocTree, NodeId, NodePath};
use crate::selector::Selector;
use crate::validators::Check;

pub use parse::{parse_ruleset, RuleError, SCHEMA_VERSION};
pub use subscription::{
    candidates, fire_candidates, resolve_active_rules, ActiveRule, Candidate, Resolution, RuleSetKey, Subscription,
    SubscriptionEntry, SubscriptionError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

/// When a rule applies: a URL pattern and, optionally, a selector that
/// must match at least one node.
///
/// `url_pattern` uses unanchored search semantics; write `^` to anchor.
#[derive(Debug, Clone)]
pub struct FiringPart {
    pub url_pattern: String,
    pub(crate) url_regex: Regex,
    pub selector: Option<Selector>,
}

impl FiringPart {
    pub fn url_matches(&self, url: &str) -> bool {
        self.url_regex.is_match(url)
    }
}

/// What a rule checks: a validator kind and its parameters.
#[derive(Debug, Clone)]
pub struct ActivePart {
    pub kind: String,
    pub params: Map<String, Value>,
    pub(crate) check: Arc<dyn Check>,
}

impl ActivePart {
    pub fn check(&self) -> &Arc<dyn Check> {
        &self.check
    }
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub id: String,
    pub title: String,
    pub description: String,
    pub severity: Severity,
    pub firing: FiringPart,
    pub active: ActivePart,
    pub tags: Vec<String>,
}

/// Versioned, immutable collection of rules.
#[derive(Debug, Clone)]
pub struct RuleSet {
    pub schema_version: u32,
    pub id: String,
    pub version: String,
    pub title: String,
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Remote templates referenced by any rule.
    pub fn template_urls(&self) -> Vec<String> {
        let mut urls: Vec<String> = self
            .rules
            .iter()
            .flat_map(|r| r.active.check.template_urls())
            .collect();
        urls.sort();
        urls.dedup();
        urls
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Firing {
    pub fired: bool,
    pub matched: Vec<NodePath>,
}

/// Like [`fires`], returning node ids.
pub fn fires_nodes(rule: &Rule, url: &str, tree: &DocTree) -> Option<Vec<NodeId>> {
    if !rule.firing.url_matches(url) {
        return None;
    }
    match &rule.firing.selector {
        None => Some(vec![tree.root()]),
        Some(sel) => {
            let nodes = sel.select_nodes(tree, tree.root());
            (!nodes.is_empty()).then_some(nodes)
        }
    }
}

/// A rule fires when its URL pattern matches and its selector, if any,
/// matches at least one node. `matched` is the selector's matches, or the
/// root when the rule has no selector.
pub fn fires(rule: &Rule, url: &str, tree: &DocTree) -> Firing {
    match fires_nodes(rule, url, tree) {
        Some(nodes) => Firing {
            fired: true,
            matched: nodes.into_iter().map(|n| tree.path_of(n)).collect(),
        },
        None => Firing {
            fired: false,
            matched: Vec::new(),
        },
    }
}
