use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{fires_nodes, Rule, RuleSet};
use crate::diagnostic::Diagnostic;
use crate::doc::{DocTree, NodeId, NodePath};

/// Identifies a ruleset by the repository it came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuleSetKey {
    pub repo_url: String,
    pub ruleset_id: String,
}

impl RuleSetKey {
    pub fn new(repo_url: impl Into<String>, ruleset_id: impl Into<String>) -> Self {
        Self {
            repo_url: repo_url.into(),
            ruleset_id: ruleset_id.into(),
        }
    }
}

fn enabled_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscriptionEntry {
    pub repo_url: String,
    pub ruleset_id: String,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    #[serde(default)]
    pub disabled_rule_ids: BTreeSet<String>,
}

impl SubscriptionEntry {
    pub fn new(repo_url: impl Into<String>, ruleset_id: impl Into<String>) -> Self {
        Self {
            repo_url: repo_url.into(),
            ruleset_id: ruleset_id.into(),
            enabled: true,
            disabled_rule_ids: BTreeSet::new(),
        }
    }

    pub fn key(&self) -> RuleSetKey {
        RuleSetKey::new(&self.repo_url, &self.ruleset_id)
    }
}

/// A user's activated rulesets and per-rule opt-outs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subscription {
    #[serde(default)]
    pub user_id: String,
    #[serde(default)]
    pub entries: Vec<SubscriptionEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubscriptionError {
    #[error("duplicate subscription entry for ruleset `{ruleset_id}` of {repo_url}: (repo_url, ruleset_id) pairs must be unique")]
    Duplicate { repo_url: String, ruleset_id: String },
}

impl Subscription {
    pub fn validate(&self) -> Result<(), SubscriptionError> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert((&e.repo_url, &e.ruleset_id)) {
                return Err(SubscriptionError::Duplicate {
                    repo_url: e.repo_url.clone(),
                    ruleset_id: e.ruleset_id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// A subscribed, enabled, not-disabled rule considered for a page.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub key: RuleSetKey,
    pub ruleset: Arc<RuleSet>,
    pub rule_index: usize,
}

impl Candidate {
    pub fn rule(&self) -> &Rule {
        &self.ruleset.rules[self.rule_index]
    }
}

/// Every rule of every enabled entry minus its disabled ids, ordered by
/// (repo_url, ruleset_id, rule position). Missing rulesets become
/// diagnostics.
pub fn candidates(sub: &Subscription, loaded: &BTreeMap<RuleSetKey, Arc<RuleSet>>) -> (Vec<Candidate>, Vec<Diagnostic>) {
    let mut entries: Vec<&SubscriptionEntry> = sub.entries.iter().filter(|e| e.enabled).collect();
    entries.sort_by(|a, b| (&a.repo_url, &a.ruleset_id).cmp(&(&b.repo_url, &b.ruleset_id)));
    entries.dedup_by(|a, b| a.repo_url == b.repo_url && a.ruleset_id == b.ruleset_id);

    let mut out = Vec::new();
    let mut diagnostics = Vec::new();
    for entry in entries {
        let key = entry.key();
        let Some(ruleset) = loaded.get(&key) else {
            diagnostics.push(Diagnostic::new(
                "missing-ruleset",
                format!("ruleset `{}` from {} is not loaded", key.ruleset_id, key.repo_url),
            ));
            continue;
        };
        for (i, rule) in ruleset.rules.iter().enumerate() {
            if !entry.disabled_rule_ids.contains(&rule.id) {
                out.push(Candidate {
                    key: key.clone(),
                    ruleset: Arc::clone(ruleset),
                    rule_index: i,
                });
            }
        }
    }
    (out, diagnostics)
}

#[derive(Debug, Clone)]
pub struct ActiveRule {
    pub candidate: Candidate,
    pub matched: Vec<NodeId>,
}

impl ActiveRule {
    pub fn rule(&self) -> &Rule {
        self.candidate.rule()
    }

    pub fn matched_paths(&self, tree: &DocTree) -> Vec<NodePath> {
        self.matched.iter().map(|&n| tree.path_of(n)).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Resolution {
    pub rules: Vec<ActiveRule>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Candidates that fire on (url, tree), preserving candidate order.
pub fn fire_candidates(candidates: &[Candidate], url: &str, tree: &DocTree) -> Vec<ActiveRule> {
    candidates
        .iter()
        .filter_map(|c| {
            fires_nodes(c.rule(), url, tree).map(|matched| ActiveRule {
                candidate: c.clone(),
                matched,
            })
        })
        .collect()
}

/// The subscribed rules that fire on this page, ordered by
/// (repo_url, ruleset_id, rule position). Never fails: missing rulesets
/// are reported as diagnostics.
pub fn resolve_active_rules(
    sub: &Subscription,
    loaded: &BTreeMap<RuleSetKey, Arc<RuleSet>>,
    url: &str,
    tree: &DocTree,
) -> Resolution {
    let (cands, diagnostics) = candidates(sub, loaded);
    Resolution {
        rules: fire_candidates(&cands, url, tree),
        diagnostics,
    }
}
