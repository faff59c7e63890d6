//! Validator kinds and the registry rules are checked against.
//!
//! A rule's active part names a kind and supplies parameters. At ruleset
//! load time the registry validates those parameters against the kind's
//! schema and asks the kind to [`Validator::prepare`] a [`Check`]; at page
//! time the check runs against the tree and the nodes the rule matched.

pub mod code_style;
pub mod code_syntax;
pub mod external;
pub mod regex_filter;
pub mod structure;
pub mod template;
mod text;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::doc::{DocTree, NodeId, NodePath};
use crate::rules::Severity;

pub use external::{CheckerPool, CheckerSpec};
pub use text::{is_scannable, TextIndex, MARKER_ATTR};

/// Character range inside one text node, in code points.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TextRange {
    #[serde(rename = "path")]
    pub node: NodePath,
    pub start: usize,
    pub end: usize,
}

impl TextRange {
    /// Checks the range against `tree`: the path must resolve to a text
    /// node and `start <= end <= len`.
    pub fn validate(&self, tree: &DocTree) -> Result<NodeId, String> {
        let id = tree
            .resolve(&self.node)
            .ok_or_else(|| format!("anchor path {} does not resolve", self.node))?;
        let text = tree
            .text(id)
            .ok_or_else(|| format!("anchor path {} is not a text node", self.node))?;
        let len = text.chars().count();
        if self.start > self.end || self.end > len {
            return Err(format!(
                "anchor [{}, {}) out of bounds for {} (length {len})",
                self.start, self.end, self.node
            ));
        }
        Ok(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    #[default]
    Annotate,
    Redact,
}

/// One finding produced by a validator, before it is attributed to a rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    /// Overrides the rule's severity (external checkers report their own).
    pub severity: Option<Severity>,
    pub message: String,
    pub anchor: Option<TextRange>,
    pub action: Action,
    pub mask: Option<char>,
    pub fix_hint: Option<String>,
}

impl Finding {
    pub fn page(message: impl Into<String>) -> Self {
        Self {
            severity: None,
            message: message.into(),
            anchor: None,
            action: Action::Annotate,
            mask: None,
            fix_hint: None,
        }
    }

    pub fn anchored(message: impl Into<String>, anchor: TextRange) -> Self {
        Self {
            anchor: Some(anchor),
            ..Self::page(message)
        }
    }

    pub fn with_severity(mut self, severity: Severity) -> Self {
        self.severity = Some(severity);
        self
    }
}

/// A finding attributed to a rule, as it appears in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub ruleset_id: String,
    pub rule_id: String,
    pub severity: Severity,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<TextRange>,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<char>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fix_hint: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    String,
    /// A string of exactly one character.
    Char,
    Integer,
    Bool,
    Array,
    Object,
    /// Either a string or an object.
    StringOrObject,
    Enum(&'static [&'static str]),
}

impl ParamType {
    fn accepts(self, value: &Value) -> bool {
        match self {
            ParamType::String => value.is_string(),
            ParamType::Char => value.as_str().is_some_and(|s| s.chars().count() == 1),
            ParamType::Integer => value.as_u64().is_some(),
            ParamType::Bool => value.is_boolean(),
            ParamType::Array => value.is_array(),
            ParamType::Object => value.is_object(),
            ParamType::StringOrObject => value.is_string() || value.is_object(),
            ParamType::Enum(options) => value.as_str().is_some_and(|s| options.contains(&s)),
        }
    }

    fn describe(self) -> String {
        match self {
            ParamType::String => "a string".into(),
            ParamType::Char => "a single character".into(),
            ParamType::Integer => "a non-negative integer".into(),
            ParamType::Bool => "a boolean".into(),
            ParamType::Array => "an array".into(),
            ParamType::Object => "an object".into(),
            ParamType::StringOrObject => "a string or an object".into(),
            ParamType::Enum(options) => format!("one of {}", options.join(", ")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub ty: ParamType,
    pub required: bool,
}

impl ParamSpec {
    pub const fn required(name: &'static str, ty: ParamType) -> Self {
        Self { name, ty, required: true }
    }

    pub const fn optional(name: &'static str, ty: ParamType) -> Self {
        Self { name, ty, required: false }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Capabilities {
    pub redact: bool,
    pub external: bool,
}

#[derive(Debug, Clone)]
pub struct ValidatorKind {
    pub kind_id: &'static str,
    pub params: &'static [ParamSpec],
    pub capabilities: Capabilities,
}

/// Parameter problem found while loading a rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamError {
    pub field: String,
    pub message: String,
    /// Syntax errors (bad regex or selector) vs. schema errors.
    pub syntax: bool,
}

impl ParamError {
    pub fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
            syntax: false,
        }
    }

    pub fn syntax(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
            syntax: true,
        }
    }
}

/// Runtime services shared by all checks of one proxy or CLI instance.
#[derive(Debug, Default)]
pub struct Services {
    /// Pre-fetched remote templates by URL; `Err` holds the fetch failure.
    pub templates: HashMap<String, Result<String, String>>,
    pub checkers: CheckerPool,
}

pub struct CheckContext<'a> {
    pub tree: &'a DocTree,
    pub matched: &'a [NodeId],
    pub services: &'a Services,
}

/// A rule's prepared active part.
pub trait Check: Send + Sync + fmt::Debug {
    fn run(&self, cx: &CheckContext<'_>) -> Vec<Finding>;

    /// Remote resources this check wants fetched before it runs.
    fn template_urls(&self) -> Vec<String> {
        Vec::new()
    }
}

pub trait Validator: Send + Sync {
    fn kind(&self) -> &ValidatorKind;

    /// Builds the check for already schema-validated parameters.
    fn prepare(&self, params: &Map<String, Value>, registry: &Registry) -> Result<Arc<dyn Check>, ParamError>;
}

/// Registered validator kinds plus the operator's checker allow-list ids.
#[derive(Clone)]
pub struct Registry {
    kinds: BTreeMap<&'static str, Arc<dyn Validator>>,
    checker_ids: BTreeSet<String>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kinds", &self.kinds.keys().collect::<Vec<_>>())
            .field("checker_ids", &self.checker_ids)
            .finish()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            kinds: BTreeMap::new(),
            checker_ids: BTreeSet::new(),
        }
    }

    /// All built-in kinds, with an empty checker allow-list.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(regex_filter::RegexFilter));
        r.register(Arc::new(structure::Structure));
        r.register(Arc::new(template::TemplateConformance));
        r.register(Arc::new(code_style::CodeStyle));
        r.register(Arc::new(code_syntax::CodeSyntax));
        r
    }

    pub fn with_checkers<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.checker_ids.extend(ids.into_iter().map(Into::into));
        self
    }

    /// Registers a kind. Panics on a duplicate kind id.
    pub fn register(&mut self, validator: Arc<dyn Validator>) {
        let id = validator.kind().kind_id;
        assert!(
            self.kinds.insert(id, validator).is_none(),
            "validator kind `{id}` registered twice"
        );
    }

    pub fn get(&self, kind_id: &str) -> Option<&Arc<dyn Validator>> {
        self.kinds.get(kind_id)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &ValidatorKind> {
        self.kinds.values().map(|v| v.kind())
    }

    pub fn checker_allowed(&self, command_id: &str) -> bool {
        self.checker_ids.contains(command_id)
    }

    /// Validates `params` against the kind's schema, then prepares the check.
    pub fn prepare(&self, kind_id: &str, params: &Map<String, Value>) -> Result<Arc<dyn Check>, ParamError> {
        let validator = self
            .get(kind_id)
            .ok_or_else(|| ParamError::schema("active.kind", format!("unknown validator kind `{kind_id}`")))?;
        let schema = validator.kind().params;
        for key in params.keys() {
            if !schema.iter().any(|p| p.name == key) {
                return Err(ParamError::schema(
                    format!("active.params.{key}"),
                    format!("unknown parameter for kind `{kind_id}`"),
                ));
            }
        }
        for spec in schema {
            match params.get(spec.name) {
                None if spec.required => {
                    return Err(ParamError::schema(
                        format!("active.params.{}", spec.name),
                        "missing required parameter",
                    ))
                }
                Some(v) if !spec.ty.accepts(v) => {
                    return Err(ParamError::schema(
                        format!("active.params.{}", spec.name),
                        format!("expected {}", spec.ty.describe()),
                    ))
                }
                _ => {}
            }
        }
        validator.prepare(params, self)
    }
}

/// Deserializes schema-checked params into a typed struct.
pub(crate) fn typed_params<T: serde::de::DeserializeOwned>(params: &Map<String, Value>) -> Result<T, ParamError> {
    serde_json::from_value(Value::Object(params.clone()))
        .map_err(|e| ParamError::schema("active.params", e.to_string()))
}

/// Compiles a pattern in the rule regex dialect.
///
/// The dialect is the `regex` crate syntax: linear-time matching with no
/// backreferences or look-around. Compiled programs are capped in size so
/// hostile patterns cannot exhaust memory.
pub fn compile_pattern(pattern: &str) -> Result<regex::Regex, regex::Error> {
    regex::RegexBuilder::new(pattern)
        .size_limit(1 << 20)
        .dfa_size_limit(1 << 20)
        .nest_limit(64)
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn params(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn builtin_kinds_are_unique_and_complete() {
        let r = Registry::builtin();
        let ids: Vec<_> = r.kinds().map(|k| k.kind_id).collect();
        assert_eq!(
            ids,
            ["code-style", "code-syntax", "regex-filter", "structure", "template-conformance"]
        );
        assert!(r.get("regex-filter").unwrap().kind().capabilities.redact);
        assert!(r.get("code-syntax").unwrap().kind().capabilities.external);
    }

    #[test]
    #[should_panic(expected = "registered twice")]
    fn duplicate_kind_panics() {
        let mut r = Registry::builtin();
        r.register(Arc::new(regex_filter::RegexFilter));
    }

    #[test]
    fn schema_errors() {
        let r = Registry::builtin();
        let err = r.prepare("nope", &Map::new()).unwrap_err();
        assert_eq!(err.field, "active.kind");
        let err = r.prepare("regex-filter", &params(json!({"message": "m"}))).unwrap_err();
        assert_eq!(err.field, "active.params.pattern");
        let err = r
            .prepare("regex-filter", &params(json!({"pattern": "x", "message": "m", "colour": 1})))
            .unwrap_err();
        assert_eq!(err.field, "active.params.colour");
        let err = r
            .prepare("regex-filter", &params(json!({"pattern": "x", "message": "m", "mask": "**"})))
            .unwrap_err();
        assert_eq!(err.field, "active.params.mask");
        assert!(!err.syntax);
    }

    #[test]
    fn pattern_dialect_rejects_backreferences() {
        assert!(compile_pattern(r"(a)\1").is_err());
        assert!(compile_pattern(r"(?=a)").is_err());
        assert!(compile_pattern(r"^https://wiki\.example\.org/").is_ok());
    }
}
