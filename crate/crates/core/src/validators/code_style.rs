//! Line-oriented style checks for code snippets.

use std::sync::Arc;

use serde::Deserialize;
use serde_json::{Map, Value};

use super::{
    typed_params, Capabilities, Check, CheckContext, Finding, ParamError, ParamSpec, ParamType, Registry,
    TextIndex, Validator, ValidatorKind,
};
use crate::doc::{DocTree, NodeId};

pub struct CodeStyle;

static KIND: ValidatorKind = ValidatorKind {
    kind_id: "code-style",
    params: &[
        ParamSpec::optional("max_line_length", ParamType::Integer),
        ParamSpec::optional("indent_unit", ParamType::Integer),
        ParamSpec::optional("forbid_tabs", ParamType::Bool),
        ParamSpec::optional("forbid_trailing_ws", ParamType::Bool),
    ],
    capabilities: Capabilities {
        redact: false,
        external: false,
    },
};

#[derive(Debug, Clone, Default, Deserialize)]
pub struct CodeStyleParams {
    pub max_line_length: Option<usize>,
    pub indent_unit: Option<usize>,
    #[serde(default)]
    pub forbid_tabs: bool,
    #[serde(default)]
    pub forbid_trailing_ws: bool,
}

impl Validator for CodeStyle {
    fn kind(&self) -> &ValidatorKind {
        &KIND
    }

    fn prepare(&self, params: &Map<String, Value>, _: &Registry) -> Result<Arc<dyn Check>, ParamError> {
        let p: CodeStyleParams = typed_params(params)?;
        if p.indent_unit == Some(0) {
            return Err(ParamError::schema("active.params.indent_unit", "must be at least 1"));
        }
        if p.max_line_length == Some(0) {
            return Err(ParamError::schema("active.params.max_line_length", "must be at least 1"));
        }
        Ok(Arc::new(p))
    }
}

impl Check for CodeStyleParams {
    fn run(&self, cx: &CheckContext<'_>) -> Vec<Finding> {
        validate_code_style(cx.tree, cx.matched, self)
    }
}

/// Matched nodes with any matched ancestor removed, so no text is checked twice.
pub(crate) fn outermost(tree: &DocTree, matched: &[NodeId]) -> Vec<NodeId> {
    let mut sorted = matched.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out: Vec<NodeId> = Vec::new();
    for n in sorted {
        if !out.last().is_some_and(|&last| tree.is_ancestor(last, n)) {
            out.push(n);
        }
    }
    out
}

/// A line of a snippet: code-point start offset and its characters
/// without the terminating `\n` (or `\r\n`).
pub(crate) fn lines(text: &str) -> Vec<(usize, Vec<char>)> {
    let mut out = Vec::new();
    let mut start = 0;
    for raw in text.split('\n') {
        let mut chars: Vec<char> = raw.chars().collect();
        let total = chars.len();
        if chars.last() == Some(&'\r') {
            chars.pop();
        }
        out.push((start, chars));
        start += total + 1;
    }
    out
}

/// One finding per violated check per line, anchored to the offending characters.
pub fn validate_code_style(tree: &DocTree, matched: &[NodeId], params: &CodeStyleParams) -> Vec<Finding> {
    let mut out = Vec::new();
    for node in outermost(tree, matched) {
        let index = TextIndex::new(tree, node);
        let mut emit = |start: usize, end: usize, message: String| {
            if let Some(anchor) = index.anchor(tree, start, end) {
                out.push(Finding::anchored(message, anchor));
            }
        };
        for (lineno, (start, chars)) in lines(index.text()).into_iter().enumerate() {
            let line = lineno + 1;
            let len = chars.len();
            if let Some(max) = params.max_line_length {
                if len > max {
                    emit(start + max, start + len, format!("line {line} is {len} characters long (max {max})"));
                }
            }
            if let Some(unit) = params.indent_unit {
                let spaces = chars.iter().take_while(|&&c| c == ' ').count();
                let blank = chars.iter().all(|c| c.is_whitespace());
                if !blank && spaces % unit != 0 {
                    emit(
                        start,
                        start + spaces,
                        format!("line {line}: indentation of {spaces} spaces is not a multiple of {unit}"),
                    );
                }
            }
            if params.forbid_tabs {
                if let Some(first) = chars.iter().position(|&c| c == '\t') {
                    let run = chars[first..].iter().take_while(|&&c| c == '\t').count();
                    emit(start + first, start + first + run, format!("line {line}: tab character"));
                }
            }
            if params.forbid_trailing_ws {
                let trailing = chars.iter().rev().take_while(|&&c| c == ' ' || c == '\t').count();
                if trailing > 0 {
                    emit(start + len - trailing, start + len, format!("line {line}: trailing whitespace"));
                }
            }
        }
    }
    out
}
