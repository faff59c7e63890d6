//! Template conformance: a page instantiated from a template may only fill
//! the template's editing holes; every literal segment must survive intact.
//!
//! A template such as `Name: {{{name}}}\nAge: {{{age}}}` splits into
//! literal segments and named holes. The subject conforms when it is
//! `L0 h1 L1 … hn Ln` for some hole strings. Matching is greedy-leftmost:
//! `L0` must be a prefix, each middle segment is taken at its leftmost
//! occurrence after the previous one, and the last segment must be a
//! suffix that does not overlap what came before. On failure the finding
//! is anchored where the failing segment was expected to start.

use std::sync::Arc;

use serde::Deserialize;
use serde_json::{Map, Value};

use super::text::char_offset;
use super::{
    typed_params, Capabilities, Check, CheckContext, Finding, ParamError, ParamSpec, ParamType, Registry,
    TextIndex, Validator, ValidatorKind,
};
use crate::doc::{DocTree, NodeId};
use crate::rules::Severity;
use crate::selector::Selector;

pub const DEFAULT_HOLE_OPEN: &str = "{{{";
pub const DEFAULT_HOLE_CLOSE: &str = "}}}";

pub struct TemplateConformance;

static KIND: ValidatorKind = ValidatorKind {
    kind_id: "template-conformance",
    params: &[
        ParamSpec::required("template_source", ParamType::StringOrObject),
        ParamSpec::optional("hole_open", ParamType::String),
        ParamSpec::optional("hole_close", ParamType::String),
        ParamSpec::optional("scope_selector", ParamType::String),
    ],
    capabilities: Capabilities {
        redact: false,
        external: false,
    },
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateParseError {
    #[error("hole opened at byte {0} is never closed")]
    Unclosed(usize),
    #[error("hole close delimiter at byte {0} has no matching open")]
    UnexpectedClose(usize),
    #[error("hole delimiters must be non-empty")]
    EmptyDelimiter,
}

/// Alternating literal segments and hole names; `literals.len() == holes.len() + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub literals: Vec<String>,
    pub holes: Vec<String>,
}

/// Where and why a subject stops conforming.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// Code-point offset into the subject.
    pub offset: usize,
    /// Index of the literal segment that could not be placed.
    pub segment: usize,
}

impl Template {
    pub fn parse(source: &str, open: &str, close: &str) -> Result<Self, TemplateParseError> {
        if open.is_empty() || close.is_empty() {
            return Err(TemplateParseError::EmptyDelimiter);
        }
        let mut literals = Vec::new();
        let mut holes = Vec::new();
        let mut rest = 0;
        loop {
            let next_open = source[rest..].find(open).map(|i| i + rest);
            let next_close = source[rest..].find(close).map(|i| i + rest);
            match (next_open, next_close) {
                (None, None) => {
                    literals.push(source[rest..].to_string());
                    break;
                }
                (None, Some(c)) => return Err(TemplateParseError::UnexpectedClose(c)),
                (Some(o), Some(c)) if c < o => return Err(TemplateParseError::UnexpectedClose(c)),
                (Some(o), _) => {
                    let name_start = o + open.len();
                    let end = source[name_start..]
                        .find(close)
                        .map(|i| i + name_start)
                        .ok_or(TemplateParseError::Unclosed(o))?;
                    if source[name_start..end].contains(open) {
                        return Err(TemplateParseError::Unclosed(o));
                    }
                    literals.push(source[rest..o].to_string());
                    holes.push(source[name_start..end].to_string());
                    rest = end + close.len();
                }
            }
        }
        Ok(Self { literals, holes })
    }

    /// `Ok(())` when `subject` conforms.
    pub fn check(&self, subject: &str) -> Result<(), Divergence> {
        let n = self.holes.len();
        let fail = |cursor: usize, segment: usize| Divergence {
            offset: char_offset(subject, cursor),
            segment,
        };
        let first = &self.literals[0];
        if !subject.starts_with(first.as_str()) || (n == 0 && subject.len() != first.len()) {
            return Err(fail(0, 0));
        }
        let mut cursor = first.len();
        for (k, lit) in self.literals.iter().enumerate().skip(1) {
            if k < n {
                match subject[cursor..].find(lit.as_str()) {
                    Some(i) => cursor += i + lit.len(),
                    None => return Err(fail(cursor, k)),
                }
            } else if subject.len() < cursor + lit.len() || !subject.ends_with(lit.as_str()) {
                return Err(fail(cursor, k));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSource {
    Inline(String),
    Tagged(TaggedSource),
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum TaggedSource {
    Inline(String),
    Url(String),
}

#[derive(Deserialize)]
struct Raw {
    template_source: RawSource,
    hole_open: Option<String>,
    hole_close: Option<String>,
    scope_selector: Option<String>,
}

#[derive(Debug, Clone)]
pub enum TemplateSource {
    Inline(Template),
    Url(String),
}

#[derive(Debug, Clone)]
pub struct TemplateParams {
    pub source: TemplateSource,
    pub hole_open: String,
    pub hole_close: String,
    pub scope_selector: Option<Selector>,
}

impl TemplateParams {
    pub fn inline(template: &str) -> Result<Self, TemplateParseError> {
        Ok(Self {
            source: TemplateSource::Inline(Template::parse(template, DEFAULT_HOLE_OPEN, DEFAULT_HOLE_CLOSE)?),
            hole_open: DEFAULT_HOLE_OPEN.to_string(),
            hole_close: DEFAULT_HOLE_CLOSE.to_string(),
            scope_selector: None,
        })
    }
}

impl Validator for TemplateConformance {
    fn kind(&self) -> &ValidatorKind {
        &KIND
    }

    fn prepare(&self, params: &Map<String, Value>, _: &Registry) -> Result<Arc<dyn Check>, ParamError> {
        let raw: Raw = typed_params(params)?;
        let hole_open = raw.hole_open.unwrap_or_else(|| DEFAULT_HOLE_OPEN.to_string());
        let hole_close = raw.hole_close.unwrap_or_else(|| DEFAULT_HOLE_CLOSE.to_string());
        let inline = |text: &str| {
            Template::parse(text, &hole_open, &hole_close)
                .map(TemplateSource::Inline)
                .map_err(|e| ParamError::syntax("active.params.template_source", e.to_string()))
        };
        let source = match &raw.template_source {
            RawSource::Inline(text) | RawSource::Tagged(TaggedSource::Inline(text)) => inline(text)?,
            RawSource::Tagged(TaggedSource::Url(u)) => {
                let parsed = url::Url::parse(u)
                    .map_err(|e| ParamError::syntax("active.params.template_source.url", format!("invalid URL `{u}`: {e}")))?;
                TemplateSource::Url(parsed.to_string())
            }
        };
        let scope_selector = raw
            .scope_selector
            .as_deref()
            .map(Selector::parse)
            .transpose()
            .map_err(|e| ParamError::syntax("active.params.scope_selector", e.to_string()))?;
        Ok(Arc::new(TemplateParams {
            source,
            hole_open,
            hole_close,
            scope_selector,
        }))
    }
}

impl Check for TemplateParams {
    fn run(&self, cx: &CheckContext<'_>) -> Vec<Finding> {
        let fetched;
        let template = match &self.source {
            TemplateSource::Inline(t) => t,
            TemplateSource::Url(u) => {
                let text = match cx.services.templates.get(u) {
                    Some(Ok(text)) => text,
                    Some(Err(e)) => return vec![fetch_warning(u, e)],
                    None => return vec![fetch_warning(u, "not fetched")],
                };
                fetched = match Template::parse(text, &self.hole_open, &self.hole_close) {
                    Ok(t) => t,
                    Err(e) => {
                        return vec![Finding::page(format!("template {u} is malformed: {e}")).with_severity(Severity::Warning)]
                    }
                };
                &fetched
            }
        };
        validate_template_conformance(cx.tree, cx.matched, template, self.scope_selector.as_ref())
    }

    fn template_urls(&self) -> Vec<String> {
        match &self.source {
            TemplateSource::Url(u) => vec![u.clone()],
            TemplateSource::Inline(_) => Vec::new(),
        }
    }
}

fn fetch_warning(url: &str, error: &str) -> Finding {
    Finding::page(format!("template {url} could not be fetched: {error}")).with_severity(Severity::Warning)
}

/// Checks the text of the first matched node (or of the first
/// `scope_selector` match under it) against `template`.
pub fn validate_template_conformance(
    tree: &DocTree,
    matched: &[NodeId],
    template: &Template,
    scope_selector: Option<&Selector>,
) -> Vec<Finding> {
    let Some(&first) = matched.first() else {
        return Vec::new();
    };
    let scope = match scope_selector {
        None => first,
        Some(sel) => match sel.select_nodes(tree, first).first() {
            Some(&n) => n,
            None => return vec![Finding::page(format!("template scope {sel} not found"))],
        },
    };
    let index = TextIndex::new(tree, scope);
    let Err(div) = template.check(index.text()) else {
        return Vec::new();
    };
    let expected = &template.literals[div.segment];
    let message = format!("content diverges from template: expected {expected:?}");
    let end = (div.offset + 1).min(index.char_len());
    match index.anchor(tree, div.offset, end) {
        Some(anchor) => vec![Finding::anchored(message, anchor)],
        None => vec![Finding::page(message)],
    }
}
