//! Flags (or masks) offending strings in text.

use std::sync::Arc;

use regex::Regex;
use serde::Deserialize;
use serde_json::{Map, Value};

use super::text::{char_offset, scannable_text_nodes};
use super::{
    compile_pattern, typed_params, Action, Capabilities, Check, CheckContext, Finding, ParamError, ParamSpec,
    ParamType, Registry, TextRange, Validator, ValidatorKind,
};
use crate::doc::{DocTree, NodeId};

pub struct RegexFilter;

static KIND: ValidatorKind = ValidatorKind {
    kind_id: "regex-filter",
    params: &[
        ParamSpec::required("pattern", ParamType::String),
        ParamSpec::optional("mode", ParamType::Enum(&["annotate", "redact"])),
        ParamSpec::optional("mask", ParamType::Char),
        ParamSpec::required("message", ParamType::String),
        ParamSpec::optional("fix_hint", ParamType::String),
    ],
    capabilities: Capabilities {
        redact: true,
        external: false,
    },
};

#[derive(Deserialize)]
struct Raw {
    pattern: String,
    #[serde(default)]
    mode: Action,
    mask: Option<char>,
    message: String,
    fix_hint: Option<String>,
}

pub const DEFAULT_MASK: char = '*';

#[derive(Debug, Clone)]
pub struct RegexFilterParams {
    pub pattern: Regex,
    pub mode: Action,
    pub mask: char,
    pub message: String,
    pub fix_hint: Option<String>,
}

impl RegexFilterParams {
    pub fn new(pattern: &str, message: &str) -> Result<Self, regex::Error> {
        Ok(Self {
            pattern: compile_pattern(pattern)?,
            mode: Action::Annotate,
            mask: DEFAULT_MASK,
            message: message.to_string(),
            fix_hint: None,
        })
    }
}

impl Validator for RegexFilter {
    fn kind(&self) -> &ValidatorKind {
        &KIND
    }

    fn prepare(&self, params: &Map<String, Value>, _: &Registry) -> Result<Arc<dyn Check>, ParamError> {
        let raw: Raw = typed_params(params)?;
        let pattern = compile_pattern(&raw.pattern)
            .map_err(|e| ParamError::syntax("active.params.pattern", format!("invalid regex `{}`: {e}", raw.pattern)))?;
        Ok(Arc::new(RegexFilterParams {
            pattern,
            mode: raw.mode,
            mask: raw.mask.unwrap_or(DEFAULT_MASK),
            message: raw.message,
            fix_hint: raw.fix_hint,
        }))
    }
}

impl Check for RegexFilterParams {
    fn run(&self, cx: &CheckContext<'_>) -> Vec<Finding> {
        validate_regex_filter(cx.tree, cx.matched, self)
    }
}

/// One finding per leftmost non-overlapping, non-empty match in each
/// scannable text node under the matched nodes.
pub fn validate_regex_filter(tree: &DocTree, matched: &[NodeId], params: &RegexFilterParams) -> Vec<Finding> {
    let mut out = Vec::new();
    for node in scannable_text_nodes(tree, matched) {
        let text = tree.text(node).expect("scannable nodes are text");
        let mut path = None;
        for m in params.pattern.find_iter(text).filter(|m| !m.is_empty()) {
            let start = char_offset(text, m.start());
            let end = start + m.as_str().chars().count();
            let node_path = path.get_or_insert_with(|| tree.path_of(node)).clone();
            out.push(Finding {
                severity: None,
                message: params.message.clone(),
                anchor: Some(TextRange {
                    node: node_path,
                    start,
                    end,
                }),
                action: params.mode,
                mask: (params.mode == Action::Redact).then_some(params.mask),
                fix_hint: params.fix_hint.clone(),
            });
        }
    }
    out
}
