//! Syntax checks for code snippets: a built-in bracket-balance lexer, or
//! an operator-allow-listed external checker.

use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{Map, Value};

use super::code_style::outermost;
use super::external::run_external_checker;
use super::{
    typed_params, Capabilities, Check, CheckContext, Finding, ParamError, ParamSpec, ParamType, Registry,
    Services, TextIndex, Validator, ValidatorKind,
};
use crate::doc::{DocTree, NodeId};

pub struct CodeSyntax;

static KIND: ValidatorKind = ValidatorKind {
    kind_id: "code-syntax",
    params: &[
        ParamSpec::optional("checker", ParamType::Enum(&["builtin-balance", "external"])),
        ParamSpec::optional("lexical", ParamType::Object),
        ParamSpec::optional("command_id", ParamType::String),
        ParamSpec::optional("timeout_ms", ParamType::Integer),
    ],
    capabilities: Capabilities {
        redact: false,
        external: true,
    },
};

pub const DEFAULT_TIMEOUT_MS: u64 = 5_000;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommentMarker {
    pub open: String,
    /// `None` for line comments, which end at the next newline.
    pub close: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexical {
    #[serde(default = "default_string_delims")]
    pub string_delims: Vec<String>,
    #[serde(default = "default_comment_markers")]
    pub comment_markers: Vec<CommentMarker>,
    #[serde(default = "default_escape")]
    pub escape: Option<char>,
}

fn default_string_delims() -> Vec<String> {
    vec!["\"".into(), "'".into()]
}

fn default_comment_markers() -> Vec<CommentMarker> {
    vec![
        CommentMarker {
            open: "//".into(),
            close: None,
        },
        CommentMarker {
            open: "/*".into(),
            close: Some("*/".into()),
        },
    ]
}

fn default_escape() -> Option<char> {
    Some('\\')
}

impl Default for Lexical {
    /// C-like: `"`/`'` strings with `\` escapes, `//` and `/* */` comments.
    fn default() -> Self {
        Self {
            string_delims: default_string_delims(),
            comment_markers: default_comment_markers(),
            escape: default_escape(),
        }
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "kebab-case")]
enum CheckerKind {
    BuiltinBalance,
    External,
}

#[derive(Deserialize)]
struct Raw {
    checker: Option<CheckerKind>,
    lexical: Option<Lexical>,
    command_id: Option<String>,
    timeout_ms: Option<u64>,
}

#[derive(Debug, Clone)]
pub enum CodeSyntaxParams {
    Balance(Lexical),
    External { command_id: String, timeout: Duration },
}

impl Validator for CodeSyntax {
    fn kind(&self) -> &ValidatorKind {
        &KIND
    }

    fn prepare(&self, params: &Map<String, Value>, registry: &Registry) -> Result<Arc<dyn Check>, ParamError> {
        let raw: Raw = typed_params(params)?;
        let check = match raw.checker.unwrap_or(CheckerKind::BuiltinBalance) {
            CheckerKind::BuiltinBalance => {
                if raw.command_id.is_some() || raw.timeout_ms.is_some() {
                    return Err(ParamError::schema(
                        "active.params.command_id",
                        "only valid with checker `external`",
                    ));
                }
                let lexical = raw.lexical.unwrap_or_default();
                if lexical.string_delims.iter().any(String::is_empty)
                    || lexical.comment_markers.iter().any(|m| m.open.is_empty() || m.close.as_deref() == Some(""))
                {
                    return Err(ParamError::schema("active.params.lexical", "delimiters must be non-empty"));
                }
                CodeSyntaxParams::Balance(lexical)
            }
            CheckerKind::External => {
                let command_id = raw
                    .command_id
                    .ok_or_else(|| ParamError::schema("active.params.command_id", "required with checker `external`"))?;
                if !registry.checker_allowed(&command_id) {
                    return Err(ParamError::schema(
                        "active.params.command_id",
                        format!("checker `{command_id}` is not in the operator allow-list"),
                    ));
                }
                CodeSyntaxParams::External {
                    command_id,
                    timeout: Duration::from_millis(raw.timeout_ms.unwrap_or(DEFAULT_TIMEOUT_MS)),
                }
            }
        };
        Ok(Arc::new(check))
    }
}

impl Check for CodeSyntaxParams {
    fn run(&self, cx: &CheckContext<'_>) -> Vec<Finding> {
        validate_code_syntax(cx.tree, cx.matched, self, cx.services)
    }
}

/// Syntax problem at a code-point offset of a snippet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceError {
    pub offset: usize,
    pub len: usize,
    pub message: String,
}

fn closer(open: char) -> char {
    match open {
        '(' => ')',
        '[' => ']',
        _ => '}',
    }
}

fn starts_at(chars: &[char], i: usize, token: &str) -> bool {
    token.chars().enumerate().all(|(k, c)| chars.get(i + k) == Some(&c))
}

fn find_from(chars: &[char], from: usize, token: &str) -> Option<usize> {
    (from..chars.len()).find(|&k| starts_at(chars, k, token))
}

/// Scans `snippet` skipping strings and comments and checks `()`, `[]`,
/// `{}` nesting. Returns the first problem: a mismatched or unmatched
/// closer, an unterminated string or block comment, or the earliest
/// opener left unclosed.
pub fn check_balance(snippet: &str, lexical: &Lexical) -> Option<BalanceError> {
    let chars: Vec<char> = snippet.chars().collect();
    let mut comments: Vec<&CommentMarker> = lexical.comment_markers.iter().collect();
    comments.sort_by_key(|m| std::cmp::Reverse(m.open.chars().count()));
    let mut strings: Vec<&String> = lexical.string_delims.iter().collect();
    strings.sort_by_key(|d| std::cmp::Reverse(d.chars().count()));

    let mut stack: Vec<(char, usize)> = Vec::new();
    let mut i = 0;
    'scan: while i < chars.len() {
        for m in &comments {
            if starts_at(&chars, i, &m.open) {
                let body = i + m.open.chars().count();
                i = match &m.close {
                    None => find_from(&chars, body, "\n").unwrap_or(chars.len()),
                    Some(close) => match find_from(&chars, body, close) {
                        Some(end) => end + close.chars().count(),
                        None => {
                            return Some(BalanceError {
                                offset: i,
                                len: m.open.chars().count(),
                                message: format!("unterminated comment `{}`", m.open),
                            })
                        }
                    },
                };
                continue 'scan;
            }
        }
        for d in &strings {
            if starts_at(&chars, i, d) {
                let mut j = i + d.chars().count();
                loop {
                    if j >= chars.len() {
                        return Some(BalanceError {
                            offset: i,
                            len: d.chars().count(),
                            message: format!("unterminated string starting with {d}"),
                        });
                    }
                    if Some(chars[j]) == lexical.escape {
                        j += 2;
                    } else if starts_at(&chars, j, d) {
                        i = j + d.chars().count();
                        continue 'scan;
                    } else {
                        j += 1;
                    }
                }
            }
        }
        match chars[i] {
            c @ ('(' | '[' | '{') => stack.push((c, i)),
            c @ (')' | ']' | '}') => match stack.pop() {
                Some((open, _)) if closer(open) == c => {}
                Some((open, at)) => {
                    return Some(BalanceError {
                        offset: i,
                        len: 1,
                        message: format!("mismatched `{c}`: expected `{}` to close `{open}` at offset {at}", closer(open)),
                    })
                }
                None => {
                    return Some(BalanceError {
                        offset: i,
                        len: 1,
                        message: format!("unmatched `{c}`"),
                    })
                }
            },
            _ => {}
        }
        i += 1;
    }
    stack.first().map(|&(open, at)| BalanceError {
        offset: at,
        len: 1,
        message: format!("unclosed `{open}`"),
    })
}

pub fn validate_code_syntax(tree: &DocTree, matched: &[NodeId], params: &CodeSyntaxParams, services: &Services) -> Vec<Finding> {
    let mut out = Vec::new();
    for node in outermost(tree, matched) {
        let index = TextIndex::new(tree, node);
        match params {
            CodeSyntaxParams::Balance(lexical) => {
                if let Some(err) = check_balance(index.text(), lexical) {
                    match index.anchor(tree, err.offset, err.offset + err.len) {
                        Some(a) => out.push(Finding::anchored(err.message, a)),
                        None => out.push(Finding::page(err.message)),
                    }
                }
            }
            CodeSyntaxParams::External { command_id, timeout } => {
                for f in run_external_checker(&services.checkers, index.text(), command_id, *timeout) {
                    let anchor = f.range.and_then(|(s, e)| index.anchor(tree, s, e));
                    let mut finding: Finding = f.into();
                    finding.anchor = anchor;
                    out.push(finding);
                }
            }
        }
    }
    out
}
