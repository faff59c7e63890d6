//! Counts selector matches and reports page-level findings when a count
//! falls outside its bounds.

use std::sync::Arc;

use serde::Deserialize;
use serde_json::{Map, Value};

use super::{
    typed_params, Capabilities, Check, CheckContext, Finding, ParamError, ParamSpec, ParamType, Registry,
    Validator, ValidatorKind,
};
use crate::doc::{DocTree, NodeId};
use crate::selector::Selector;

pub struct Structure;

static KIND: ValidatorKind = ValidatorKind {
    kind_id: "structure",
    params: &[ParamSpec::required("assertions", ParamType::Array)],
    capabilities: Capabilities {
        redact: false,
        external: false,
    },
};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAssertion {
    selector: String,
    min: Option<usize>,
    max: Option<usize>,
    message: String,
}

#[derive(Deserialize)]
struct Raw {
    assertions: Vec<RawAssertion>,
}

#[derive(Debug, Clone)]
pub struct Assertion {
    pub selector: Selector,
    pub min: Option<usize>,
    pub max: Option<usize>,
    pub message: String,
}

impl Assertion {
    fn expectation(&self) -> String {
        match (self.min, self.max) {
            (Some(a), Some(b)) if a == b => format!("expected {a}"),
            (Some(a), Some(b)) => format!("expected between {a} and {b}"),
            (Some(a), None) => format!("expected at least {a}"),
            (None, Some(b)) => format!("expected at most {b}"),
            (None, None) => "expected any number".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StructureParams {
    pub assertions: Vec<Assertion>,
}

impl Validator for Structure {
    fn kind(&self) -> &ValidatorKind {
        &KIND
    }

    fn prepare(&self, params: &Map<String, Value>, _: &Registry) -> Result<Arc<dyn Check>, ParamError> {
        let raw: Raw = typed_params(params)?;
        let mut assertions = Vec::with_capacity(raw.assertions.len());
        for (i, a) in raw.assertions.into_iter().enumerate() {
            let field = format!("active.params.assertions[{i}]");
            let selector = Selector::parse(&a.selector).map_err(|e| ParamError::syntax(format!("{field}.selector"), e.to_string()))?;
            if let (Some(min), Some(max)) = (a.min, a.max) {
                if min > max {
                    return Err(ParamError::schema(field, format!("min {min} exceeds max {max}")));
                }
            }
            assertions.push(Assertion {
                selector,
                min: a.min,
                max: a.max,
                message: a.message,
            });
        }
        Ok(Arc::new(StructureParams { assertions }))
    }
}

impl Check for StructureParams {
    fn run(&self, cx: &CheckContext<'_>) -> Vec<Finding> {
        validate_structure(cx.tree, cx.matched, self)
    }
}

/// Evaluates every assertion relative to each matched node.
pub fn validate_structure(tree: &DocTree, matched: &[NodeId], params: &StructureParams) -> Vec<Finding> {
    let mut out = Vec::new();
    for &node in matched {
        for a in &params.assertions {
            let count = a.selector.select_nodes(tree, node).len();
            let low = a.min.is_some_and(|m| count < m);
            let high = a.max.is_some_and(|m| count > m);
            if low || high {
                out.push(Finding::page(format!(
                    "{}: {}, found {count} for {}",
                    a.message,
                    a.expectation(),
                    a.selector
                )));
            }
        }
    }
    out
}
