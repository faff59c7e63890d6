use std::collections::HashMap;

use super::{DocTree, Namespace, NodeId, NodeKind};

/// Raw-HTML substitutions applied while serializing a tree.
#[derive(Debug, Clone, Default)]
pub struct Edits {
    /// Markup emitted in place of a node and its whole subtree.
    pub replace: HashMap<NodeId, String>,
    /// Markup emitted just before an element's end tag.
    pub append: HashMap<NodeId, String>,
}

impl Edits {
    pub fn is_empty(&self) -> bool {
        self.replace.is_empty() && self.append.is_empty()
    }
}

const VOID: &[&str] = &[
    "area", "base", "basefont", "bgsound", "br", "col", "embed", "frame", "hr", "img", "input",
    "keygen", "link", "meta", "param", "source", "track", "wbr",
];

/// Elements whose text children are emitted without escaping.
pub(crate) const RAW_TEXT: &[&str] = &[
    "style", "script", "xmp", "iframe", "noembed", "noframes", "plaintext", "noscript",
];

pub(crate) fn escape_text(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '\u{a0}' => out.push_str("&nbsp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
}

pub(crate) fn escape_attr(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '\u{a0}' => out.push_str("&nbsp;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
}

enum Visit {
    Enter(NodeId),
    Leave(NodeId),
}

/// The first non-empty text node under `id` in document order.
fn leading_text(tree: &DocTree, id: NodeId) -> Option<&str> {
    let mut stack: Vec<NodeId> = tree.children(id).iter().rev().copied().collect();
    while let Some(n) = stack.pop() {
        match tree.kind(n) {
            NodeKind::Text(t) if !t.is_empty() => return Some(t),
            NodeKind::Element(_) => stack.extend(tree.children(n).iter().rev()),
            _ => {}
        }
    }
    None
}

pub(super) fn serialize(tree: &DocTree, edits: &Edits) -> String {
    let mut out = String::with_capacity(tree.len() * 16);
    if let Some(name) = tree.doctype() {
        out.push_str("<!DOCTYPE ");
        out.push_str(name);
        out.push('>');
    }
    let mut stack: Vec<Visit> = tree.children(tree.root()).iter().rev().map(|&c| Visit::Enter(c)).collect();
    while let Some(visit) = stack.pop() {
        match visit {
            Visit::Leave(id) => {
                let el = tree.element(id).expect("only elements are left");
                if let Some(extra) = edits.append.get(&id) {
                    out.push_str(extra);
                }
                out.push_str("</");
                out.push_str(&el.name);
                out.push('>');
            }
            Visit::Enter(id) => {
                if let Some(markup) = edits.replace.get(&id) {
                    out.push_str(markup);
                    continue;
                }
                match tree.kind(id) {
                    NodeKind::Document => {}
                    NodeKind::Comment(c) => {
                        out.push_str("<!--");
                        out.push_str(c);
                        out.push_str("-->");
                    }
                    NodeKind::Text(t) => {
                        let raw = tree
                            .parent(id)
                            .and_then(|p| tree.element(p))
                            .is_some_and(|e| e.namespace == Namespace::Html && RAW_TEXT.contains(&e.name.as_str()));
                        if raw {
                            out.push_str(t);
                        } else {
                            escape_text(t, &mut out);
                        }
                    }
                    NodeKind::Element(el) => {
                        out.push('<');
                        out.push_str(&el.name);
                        for (k, v) in &el.attrs {
                            out.push(' ');
                            out.push_str(k);
                            out.push_str("=\"");
                            escape_attr(v, &mut out);
                            out.push('"');
                        }
                        out.push('>');
                        let html = el.namespace == Namespace::Html;
                        if html && VOID.contains(&el.name.as_str()) && !edits.append.contains_key(&id) {
                            continue;
                        }
                        // The parser drops one newline directly after these start
                        // tags, so one is added whenever the content starts with one.
                        if html
                            && matches!(el.name.as_str(), "pre" | "textarea" | "listing")
                            && leading_text(tree, id).is_some_and(|t| t.starts_with('\n'))
                        {
                            out.push('\n');
                        }
                        stack.push(Visit::Leave(id));
                        stack.extend(tree.children(id).iter().rev().map(|&c| Visit::Enter(c)));
                    }
                }
            }
        }
    }
    out
}
