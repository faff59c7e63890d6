use std::collections::HashSet;

use serde_json::{Map, Value};

use super::{ActivePart, FiringPart, Rule, RuleSet, Severity};
use crate::selector::Selector;
use crate::validators::{compile_pattern, Registry};

/// The only ruleset schema version this build understands.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("schema error{}: {message}", location(rule, field))]
    Schema {
        rule: Option<String>,
        field: String,
        message: String,
    },
    #[error("syntax error{}: {message}", location(rule, field))]
    Syntax {
        rule: Option<String>,
        field: String,
        message: String,
    },
}

fn location(rule: &Option<String>, field: &str) -> String {
    match (rule, field.is_empty()) {
        (Some(r), false) => format!(" in rule `{r}` field `{field}`"),
        (Some(r), true) => format!(" in rule `{r}`"),
        (None, false) => format!(" in field `{field}`"),
        (None, true) => String::new(),
    }
}

impl RuleError {
    pub fn rule(&self) -> Option<&str> {
        match self {
            RuleError::Schema { rule, .. } | RuleError::Syntax { rule, .. } => rule.as_deref(),
        }
    }

    pub fn field(&self) -> &str {
        match self {
            RuleError::Schema { field, .. } | RuleError::Syntax { field, .. } => field,
        }
    }
}

struct Ctx<'a> {
    rule: Option<&'a str>,
}

impl Ctx<'_> {
    fn schema(&self, field: impl Into<String>, message: impl Into<String>) -> RuleError {
        RuleError::Schema {
            rule: self.rule.map(str::to_string),
            field: field.into(),
            message: message.into(),
        }
    }

    fn syntax(&self, field: impl Into<String>, message: impl Into<String>) -> RuleError {
        RuleError::Syntax {
            rule: self.rule.map(str::to_string),
            field: field.into(),
            message: message.into(),
        }
    }

    fn object<'v>(&self, value: &'v Value, field: &str) -> Result<&'v Map<String, Value>, RuleError> {
        value.as_object().ok_or_else(|| self.schema(field, "expected an object"))
    }

    fn only_keys(&self, obj: &Map<String, Value>, prefix: &str, allowed: &[&str]) -> Result<(), RuleError> {
        match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(self.schema(join(prefix, k), "unknown field")),
            None => Ok(()),
        }
    }

    fn string(&self, obj: &Map<String, Value>, prefix: &str, key: &str) -> Result<String, RuleError> {
        match obj.get(key) {
            None => Err(self.schema(join(prefix, key), "missing field")),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(self.schema(join(prefix, key), "expected a string")),
        }
    }

    fn opt_string(&self, obj: &Map<String, Value>, prefix: &str, key: &str) -> Result<Option<String>, RuleError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.schema(join(prefix, key), "expected a string")),
        }
    }

    fn identifier(&self, obj: &Map<String, Value>, key: &str) -> Result<String, RuleError> {
        let s = self.string(obj, "", key)?;
        if is_identifier(&s) {
            Ok(s)
        } else {
            Err(self.schema(key, format!("`{s}` is not a valid identifier")))
        }
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Identifiers: ASCII alphanumerics plus `.`, `_`, `-`, starting alphanumeric.
pub(crate) fn is_identifier(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_alphanumeric())
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

/// Parses and validates a UTF-8 JSON ruleset file. Every regex, selector
/// and validator parameter set is compiled here, once.
pub fn parse_ruleset(bytes: &[u8], registry: &Registry) -> Result<RuleSet, RuleError> {
    let top = Ctx { rule: None };
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| top.syntax("", format!("malformed JSON: {e}")))?;
    let obj = top.object(&doc, "")?;
    top.only_keys(obj, "", &["schema_version", "id", "version", "title", "rules"])?;

    let schema_version = match obj.get("schema_version") {
        None => return Err(top.schema("schema_version", "missing field")),
        Some(v) => v.as_u64().ok_or_else(|| top.schema("schema_version", "expected an integer"))?,
    };
    if schema_version != u64::from(SCHEMA_VERSION) {
        return Err(top.schema(
            "schema_version",
            format!("unsupported schema version {schema_version} (expected {SCHEMA_VERSION})"),
        ));
    }
    let id = top.identifier(obj, "id")?;
    let version = top.string(obj, "", "version")?;
    let title = top.string(obj, "", "title")?;
    let raw_rules = match obj.get("rules") {
        None => return Err(top.schema("rules", "missing field")),
        Some(v) => v.as_array().ok_or_else(|| top.schema("rules", "expected an array"))?,
    };

    let mut seen = HashSet::new();
    let mut rules = Vec::with_capacity(raw_rules.len());
    for (i, raw) in raw_rules.iter().enumerate() {
        let field = format!("rules[{i}]");
        let robj = top.object(raw, &field)?;
        let rule_id = match robj.get("id") {
            Some(Value::String(s)) if is_identifier(s) => s.clone(),
            Some(Value::String(s)) => return Err(top.schema(format!("{field}.id"), format!("`{s}` is not a valid identifier"))),
            Some(_) => return Err(top.schema(format!("{field}.id"), "expected a string")),
            None => return Err(top.schema(format!("{field}.id"), "missing field")),
        };
        if !seen.insert(rule_id.clone()) {
            return Err(RuleError::Schema {
                rule: Some(rule_id.clone()),
                field: "id".into(),
                message: format!("duplicate rule id `{rule_id}`"),
            });
        }
        rules.push(parse_rule(&Ctx { rule: Some(&rule_id) }, robj, rule_id.clone(), registry)?);
    }

    Ok(RuleSet {
        schema_version: SCHEMA_VERSION,
        id,
        version,
        title,
        rules,
    })
}

fn parse_rule(cx: &Ctx<'_>, obj: &Map<String, Value>, id: String, registry: &Registry) -> Result<Rule, RuleError> {
    cx.only_keys(obj, "", &["id", "title", "description", "severity", "firing", "active", "tags"])?;
    let title = cx.string(obj, "", "title")?;
    let description = cx.string(obj, "", "description")?;
    let severity = match obj.get("severity") {
        None => return Err(cx.schema("severity", "missing field")),
        Some(v) => serde_json::from_value::<Severity>(v.clone())
            .map_err(|_| cx.schema("severity", "expected one of info, warning, error"))?,
    };

    let firing = cx.object(obj.get("firing").ok_or_else(|| cx.schema("firing", "missing field"))?, "firing")?;
    cx.only_keys(firing, "firing", &["url_pattern", "selector"])?;
    let url_pattern = cx.string(firing, "firing", "url_pattern")?;
    let url_regex = compile_pattern(&url_pattern)
        .map_err(|e| cx.syntax("firing.url_pattern", format!("invalid regex `{url_pattern}`: {e}")))?;
    let selector = cx
        .opt_string(firing, "firing", "selector")?
        .map(|s| Selector::parse(&s).map_err(|e| cx.syntax("firing.selector", e.to_string())))
        .transpose()?;

    let active = cx.object(obj.get("active").ok_or_else(|| cx.schema("active", "missing field"))?, "active")?;
    cx.only_keys(active, "active", &["kind", "params"])?;
    let kind = cx.string(active, "active", "kind")?;
    let params = match active.get("params") {
        None => Map::new(),
        Some(v) => cx.object(v, "active.params")?.clone(),
    };
    let check = registry.prepare(&kind, &params).map_err(|e| {
        if e.syntax {
            cx.syntax(e.field, e.message)
        } else {
            cx.schema(e.field, e.message)
        }
    })?;

    let tags = match obj.get("tags") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|t| t.as_str().map(str::to_string).ok_or_else(|| cx.schema("tags", "expected strings")))
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(cx.schema("tags", "expected an array")),
    };

    Ok(Rule {
        id,
        title,
        description,
        severity,
        firing: FiringPart {
            url_pattern,
            url_regex,
            selector,
        },
        active: ActivePart { kind, params, check },
        tags,
    })
}
