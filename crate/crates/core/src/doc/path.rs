use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Step name used for text nodes in a [`NodePath`].
pub const TEXT_STEP: &str = "text()";
/// Step name used for comment nodes in a [`NodePath`].
pub const COMMENT_STEP: &str = "comment()";

/// One step of a [`NodePath`]: a node name and its 1-based index among
/// same-name siblings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathStep {
    pub name: String,
    pub index: u32,
}

/// Stable address of a node, serialized as `/html[1]/body[1]/p[2]`.
///
/// The empty path (`/`) addresses the document root. Text and comment
/// nodes use the `text()` and `comment()` step names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePath {
    steps: Vec<PathStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid node path `{input}`: {reason}")]
pub struct PathSyntaxError {
    pub input: String,
    pub reason: &'static str,
}

impl NodePath {
    pub fn root() -> Self {
        Self::default()
    }

    pub fn from_steps(steps: Vec<PathStep>) -> Self {
        debug_assert!(steps.iter().all(|s| s.index >= 1));
        Self { steps }
    }

    pub fn steps(&self) -> &[PathStep] {
        &self.steps
    }

    pub fn is_root(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn child(&self, name: impl Into<String>, index: u32) -> Self {
        let mut steps = self.steps.clone();
        steps.push(PathStep {
            name: name.into(),
            index,
        });
        Self { steps }
    }

    /// True when `self` is `other` or one of its ancestors.
    pub fn contains(&self, other: &NodePath) -> bool {
        other.steps.len() >= self.steps.len() && other.steps[..self.steps.len()] == self.steps[..]
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.steps.is_empty() {
            return f.write_str("/");
        }
        for step in &self.steps {
            write!(f, "/{}[{}]", step.name, step.index)?;
        }
        Ok(())
    }
}

fn valid_step_name(name: &str) -> bool {
    if name == TEXT_STEP || name == COMMENT_STEP {
        return true;
    }
    !name.is_empty()
        && name
            .chars()
            .all(|c| !matches!(c, '/' | '[' | ']' | '(' | ')') && !c.is_whitespace())
}

impl FromStr for NodePath {
    type Err = PathSyntaxError;

    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let err = |reason| PathSyntaxError {
            input: input.to_string(),
            reason,
        };
        if input == "/" {
            return Ok(Self::root());
        }
        let rest = input.strip_prefix('/').ok_or_else(|| err("must start with `/`"))?;
        let mut steps = Vec::new();
        for raw in rest.split('/') {
            let open = raw.rfind('[').ok_or_else(|| err("step without `[index]`"))?;
            let close = raw.strip_suffix(']').ok_or_else(|| err("step must end with `]`"))?;
            let name = &raw[..open];
            let digits = &close[open + 1..];
            if !valid_step_name(name) {
                return Err(err("invalid step name"));
            }
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err("index must be a decimal integer"));
            }
            let index: u32 = digits.parse().map_err(|_| err("index out of range"))?;
            if index == 0 {
                return Err(err("index must be at least 1"));
            }
            steps.push(PathStep {
                name: name.to_string(),
                index,
            });
        }
        Ok(Self { steps })
    }
}

impl Serialize for NodePath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodePath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
