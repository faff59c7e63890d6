//! A closed subset of XPath 1.0 abbreviated syntax.
//!
//! ```text
//! selector  := ( "/" | "//" ) step ( ( "/" | "//" ) step )*
//! step      := ( NAME | "*" | "text()" ) predicate*
//! predicate := "[" INTEGER "]"
//!            | "[" "@" NAME "=" LITERAL "]"
//!            | "[" "text()" "=" LITERAL "]"
//! LITERAL   := "'" [^']* "'" | '"' [^"]* '"'
//! ```
//!
//! Whitespace is allowed only inside predicate brackets. Evaluation is
//! relative to a context node (the document root for [`Selector::select`]):
//! a leading `/` selects the context's children and `//` its descendants.
//! Name tests compare element local names case-sensitively. Anything
//! outside this grammar is a parse error.

use std::fmt;
use std::str::FromStr;

use crate::doc::{DocTree, NodeId, NodeKind, NodePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Child,
    Descendant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeTest {
    Name(String),
    AnyElement,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    /// 1-based position among the candidates that passed earlier predicates.
    Position(usize),
    AttrEquals { name: String, value: String },
    /// Some child text node equals the value.
    TextEquals(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub axis: Axis,
    pub test: NodeTest,
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid selector `{input}` at offset {offset}: {reason}")]
pub struct SelectorError {
    pub input: String,
    pub offset: usize,
    pub reason: String,
}

impl Selector {
    pub fn parse(input: &str) -> Result<Self, SelectorError> {
        Parser { input, pos: 0 }.selector()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Matches from the document root, in document order.
    pub fn select(&self, tree: &DocTree) -> Vec<NodePath> {
        self.select_nodes(tree, tree.root())
            .into_iter()
            .map(|n| tree.path_of(n))
            .collect()
    }

    /// Matches relative to `context`, in document order without duplicates.
    pub fn select_nodes(&self, tree: &DocTree, context: NodeId) -> Vec<NodeId> {
        let mut current = vec![context];
        let mut seen = vec![false; tree.len()];
        for step in &self.steps {
            let parents: Vec<NodeId> = match step.axis {
                Axis::Child => current,
                Axis::Descendant => {
                    seen.iter_mut().for_each(|s| *s = false);
                    let mut out = Vec::new();
                    for &c in &current {
                        if seen[c.index()] {
                            continue;
                        }
                        for d in tree.subtree(c) {
                            if !seen[d.index()] {
                                seen[d.index()] = true;
                                out.push(d);
                            }
                        }
                    }
                    out
                }
            };
            let mut next = Vec::new();
            for p in parents {
                next.extend(apply_step(tree, p, step));
            }
            next.sort_unstable();
            next.dedup();
            current = next;
            if current.is_empty() {
                break;
            }
        }
        current
    }
}

fn node_test(tree: &DocTree, id: NodeId, test: &NodeTest) -> bool {
    match (test, tree.kind(id)) {
        (NodeTest::AnyElement, NodeKind::Element(_)) => true,
        (NodeTest::Name(n), NodeKind::Element(e)) => &e.name == n,
        (NodeTest::Text, NodeKind::Text(_)) => true,
        _ => false,
    }
}

fn predicate_holds(tree: &DocTree, id: NodeId, pred: &Predicate) -> bool {
    match pred {
        Predicate::Position(_) => unreachable!("positional predicates are applied to the whole set"),
        Predicate::AttrEquals { name, value } => tree
            .element(id)
            .and_then(|e| e.attr(name))
            .is_some_and(|v| v == value),
        Predicate::TextEquals(value) => tree
            .children(id)
            .iter()
            .any(|&c| tree.text(c) == Some(value.as_str())),
    }
}

fn apply_step(tree: &DocTree, parent: NodeId, step: &Step) -> Vec<NodeId> {
    let mut set: Vec<NodeId> = tree
        .children(parent)
        .iter()
        .copied()
        .filter(|&c| node_test(tree, c, &step.test))
        .collect();
    for pred in &step.predicates {
        set = match pred {
            Predicate::Position(n) => set.get(n - 1).copied().into_iter().collect(),
            other => set.into_iter().filter(|&c| predicate_holds(tree, c, other)).collect(),
        };
    }
    set
}

impl FromStr for Selector {
    type Err = SelectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Selector::parse(s)
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, value: &str) -> fmt::Result {
    if value.contains('\'') {
        write!(f, "\"{value}\"")
    } else {
        write!(f, "'{value}'")
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for step in &self.steps {
            f.write_str(match step.axis {
                Axis::Child => "/",
                Axis::Descendant => "//",
            })?;
            match &step.test {
                NodeTest::Name(n) => f.write_str(n)?,
                NodeTest::AnyElement => f.write_str("*")?,
                NodeTest::Text => f.write_str("text()")?,
            }
            for pred in &step.predicates {
                match pred {
                    Predicate::Position(n) => write!(f, "[{n}]")?,
                    Predicate::AttrEquals { name, value } => {
                        write!(f, "[@{name}=")?;
                        write_literal(f, value)?;
                        f.write_str("]")?;
                    }
                    Predicate::TextEquals(value) => {
                        f.write_str("[text()=")?;
                        write_literal(f, value)?;
                        f.write_str("]")?;
                    }
                }
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    input: &'a str,
    pos: usize,
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':')
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.input[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn error<T>(&self, reason: impl Into<String>) -> Result<T, SelectorError> {
        Err(SelectorError {
            input: self.input.to_string(),
            offset: self.pos,
            reason: reason.into(),
        })
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), SelectorError> {
        if self.eat(token) {
            Ok(())
        } else {
            self.error(format!("expected `{token}`"))
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c == ' ' || c == '\t') {
            self.pos += 1;
        }
    }

    fn name(&mut self) -> Result<String, SelectorError> {
        let rest = self.rest();
        match rest.chars().next() {
            Some(c) if is_name_start(c) => {}
            _ => return self.error("expected a name"),
        }
        let len = rest
            .char_indices()
            .find(|&(_, c)| !is_name_char(c))
            .map_or(rest.len(), |(i, _)| i);
        self.pos += len;
        Ok(rest[..len].to_string())
    }

    fn literal(&mut self) -> Result<String, SelectorError> {
        let quote = match self.peek() {
            Some(q @ ('\'' | '"')) => q,
            _ => return self.error("expected a quoted literal"),
        };
        self.pos += 1;
        match self.rest().find(quote) {
            Some(end) => {
                let value = self.rest()[..end].to_string();
                self.pos += end + 1;
                Ok(value)
            }
            None => self.error("unterminated literal"),
        }
    }

    fn selector(mut self) -> Result<Selector, SelectorError> {
        let mut steps = Vec::new();
        if self.input.is_empty() {
            return self.error("empty selector");
        }
        while self.pos < self.input.len() {
            let axis = if self.eat("//") {
                Axis::Descendant
            } else if self.eat("/") {
                Axis::Child
            } else {
                return self.error("expected `/` or `//`");
            };
            steps.push(self.step(axis)?);
        }
        Ok(Selector { steps })
    }

    fn step(&mut self, axis: Axis) -> Result<Step, SelectorError> {
        let test = if self.eat("*") {
            NodeTest::AnyElement
        } else if self.eat("text()") {
            NodeTest::Text
        } else {
            let name = self.name()?;
            if self.peek() == Some('(') {
                return self.error(format!("unsupported function `{name}()`"));
            }
            NodeTest::Name(name)
        };
        let mut predicates = Vec::new();
        while self.eat("[") {
            self.skip_ws();
            let pred = if self.eat("@") {
                let name = self.name()?;
                self.skip_ws();
                self.expect("=")?;
                self.skip_ws();
                Predicate::AttrEquals {
                    name,
                    value: self.literal()?,
                }
            } else if self.eat("text()") {
                self.skip_ws();
                self.expect("=")?;
                self.skip_ws();
                Predicate::TextEquals(self.literal()?)
            } else if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                let rest = self.rest();
                let len = rest.bytes().take_while(u8::is_ascii_digit).count();
                let n: usize = match rest[..len].parse() {
                    Ok(n) if n >= 1 => n,
                    _ => return self.error("position must be a positive integer"),
                };
                self.pos += len;
                Predicate::Position(n)
            } else {
                return self.error("unsupported predicate");
            };
            self.skip_ws();
            self.expect("]")?;
            predicates.push(pred);
        }
        Ok(Step {
            axis,
            test,
            predicates,
        })
    }
}
