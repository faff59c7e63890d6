//! Fires rules, runs their validators, and assembles the page report.

mod merge;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostic::Diagnostic;
use crate::doc::{parse_html, DocError, DocTree, ParseOptions};
use crate::rules::{fire_candidates, Candidate, Severity};
use crate::validators::{is_scannable, Action, Annotation, CheckContext, Registry, Services};

pub use merge::{extract_text, merge, Merged, OVERLAY_ATTR, OVERLAY_SCRIPT, OVERLAY_STYLESHEET, REPORT_ELEMENT_ID};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub rules_evaluated: usize,
    pub rules_fired: usize,
    pub duration_ms: u64,
}

/// Outcome of checking one page view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub url: String,
    /// RFC 3339, UTC.
    pub generated_at: String,
    /// SHA-256 of the body the anchors were computed against.
    pub doc_hash: String,
    pub annotations: Vec<Annotation>,
    pub diagnostics: Vec<Diagnostic>,
    pub stats: Stats,
}

impl Report {
    pub fn count(&self, severity: Severity) -> usize {
        self.annotations.iter().filter(|a| a.severity == severity).count()
    }

    pub fn has_errors(&self) -> bool {
        self.count(Severity::Error) > 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reports always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("could not parse page: {0}")]
    Parse(#[from] DocError),
}

/// Long-lived state shared by every pipeline run.
#[derive(Debug, Default)]
pub struct PipelineEnv {
    pub registry: Registry,
    pub services: Services,
    pub parse: ParseOptions,
}

/// Parses `body`, fires `candidates` against it, runs the validators of the
/// rules that fired, and returns the report with the tree the anchors
/// refer to. `body` itself is never modified.
pub fn run_pipeline(
    url: &str,
    body: &[u8],
    declared_encoding: Option<&str>,
    candidates: &[Candidate],
    env: &PipelineEnv,
) -> Result<(Report, DocTree), PipelineError> {
    let started = Instant::now();
    let tree = parse_html(body, declared_encoding, url, &env.parse)?;
    let fired = fire_candidates(candidates, url, &tree);

    let mut annotations = Vec::new();
    let mut diagnostics = Vec::new();
    for active in &fired {
        let rule = active.rule();
        let can_redact = env
            .registry
            .get(&rule.active.kind)
            .is_some_and(|v| v.kind().capabilities.redact);
        let findings = rule.active.check().run(&CheckContext {
            tree: &tree,
            matched: &active.matched,
            services: &env.services,
        });
        for f in findings {
            let mut anchor = f.anchor;
            if let Some(a) = &anchor {
                let verdict = a.validate(&tree).and_then(|id| {
                    is_scannable(&tree, id)
                        .then_some(())
                        .ok_or_else(|| format!("anchor path {} is inside non-annotatable content", a.node))
                });
                if let Err(why) = verdict {
                    diagnostics.push(Diagnostic::new(
                        "anchor-invalid",
                        format!("rule `{}`: {why}; reported page-level", rule.id),
                    ));
                    anchor = None;
                }
            }
            let redact = f.action == Action::Redact && can_redact && anchor.is_some();
            annotations.push(Annotation {
                id: format!("m{}", annotations.len()),
                ruleset_id: active.candidate.ruleset.id.clone(),
                rule_id: rule.id.clone(),
                severity: f.severity.unwrap_or(rule.severity),
                message: f.message,
                anchor,
                action: if redact { Action::Redact } else { Action::Annotate },
                mask: if redact { f.mask.or(Some('*')) } else { None },
                fix_hint: f.fix_hint,
            });
        }
    }

    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        url: url.to_string(),
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        doc_hash: tree.source_hash().to_string(),
        annotations,
        diagnostics,
        stats: Stats {
            rules_evaluated: candidates.len(),
            rules_fired: fired.len(),
            duration_ms: started.elapsed().as_millis() as u64,
        },
    };
    Ok((report, tree))
}

/// [`run_pipeline`] followed by [`merge`]: the annotated page and the
/// final report. The single path shared by every front end.
pub fn annotate(
    url: &str,
    body: &[u8],
    declared_encoding: Option<&str>,
    candidates: &[Candidate],
    env: &PipelineEnv,
    overlay_enabled: bool,
) -> Result<Merged, PipelineError> {
    let (report, tree) = run_pipeline(url, body, declared_encoding, candidates, env)?;
    Ok(merge(&tree, &report, overlay_enabled))
}
