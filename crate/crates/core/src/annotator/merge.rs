//! Folds a report back into the page as inline markers plus, optionally,
//! the overlay assets and the embedded report.

use std::collections::{BTreeMap, HashSet};

use super::Report;
use crate::diagnostic::Diagnostic;
use crate::doc::{escape_attr, escape_text, DocTree, Edits, NodeId, NodeKind};
use crate::validators::{is_scannable, Action, Annotation, MARKER_ATTR};

/// Id of the `<script type="application/json">` element carrying the report.
pub const REPORT_ELEMENT_ID: &str = "manners-report";
/// Attribute marking every element injected for the overlay.
pub const OVERLAY_ATTR: &str = "data-manners-overlay";
pub const OVERLAY_STYLESHEET: &str = "/_manners/ui/overlay.css";
pub const OVERLAY_SCRIPT: &str = "/_manners/ui/overlay.js";

#[derive(Debug, Clone)]
pub struct Merged {
    pub html: Vec<u8>,
    /// The input report plus any downgrades made while merging.
    pub report: Report,
}

#[derive(Debug)]
struct Span<'a> {
    start: usize,
    end: usize,
    ann: &'a Annotation,
}

/// Inserts a marker for every anchored annotation and, when
/// `overlay_enabled`, the overlay stylesheet, script and report element.
///
/// Annotations whose marker already exists in `tree` are skipped, so
/// merging a merged page again with the same report changes nothing.
/// Invalid anchors are downgraded to page level with a diagnostic.
pub fn merge(tree: &DocTree, report: &Report, overlay_enabled: bool) -> Merged {
    let mut report = report.clone();
    let existing = existing_markers(tree);
    let mut by_node: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    let mut downgrades = Vec::new();

    for (i, ann) in report.annotations.iter().enumerate() {
        let Some(anchor) = &ann.anchor else { continue };
        if existing.contains(ann.id.as_str()) {
            continue;
        }
        let verdict = anchor.validate(tree).and_then(|id| {
            if is_scannable(tree, id) {
                Ok(id)
            } else {
                Err(format!("anchor path {} is inside non-annotatable content", anchor.node))
            }
        });
        match verdict {
            Ok(id) => by_node.entry(id).or_default().push(i),
            Err(why) => downgrades.push((i, why)),
        }
    }
    for (i, why) in downgrades {
        let ann = &mut report.annotations[i];
        ann.anchor = None;
        ann.mask = None;
        ann.action = Action::Annotate;
        report.diagnostics.push(Diagnostic::new(
            "anchor-invalid",
            format!("annotation {} of rule `{}`: {why}; reported page-level", ann.id, ann.rule_id),
        ));
    }

    let mut edits = Edits::default();
    for (node, idx) in &by_node {
        let text = tree.text(*node).expect("validated text node");
        let spans: Vec<Span> = idx
            .iter()
            .map(|&i| {
                let ann = &report.annotations[i];
                let a = ann.anchor.as_ref().expect("anchored");
                Span {
                    start: a.start,
                    end: a.end,
                    ann,
                }
            })
            .collect();
        edits.replace.insert(*node, render_text(text, spans));
    }

    if overlay_enabled {
        inject_overlay(tree, &report, &mut edits);
    }
    let html = if edits.is_empty() { tree.to_html() } else { tree.to_html_with(&edits) };
    Merged {
        html: html.into_bytes(),
        report,
    }
}

fn existing_markers(tree: &DocTree) -> HashSet<&str> {
    tree.ids()
        .filter_map(|n| tree.element(n))
        .filter_map(|e| e.attr(MARKER_ATTR))
        .collect()
}

fn open_tag(ann: &Annotation, out: &mut String) {
    out.push_str("<span data-manners-rule=\"");
    escape_attr(&format!("{}/{}", ann.ruleset_id, ann.rule_id), out);
    out.push_str("\" data-manners-severity=\"");
    out.push_str(&ann.severity.to_string());
    out.push_str("\" ");
    out.push_str(MARKER_ATTR);
    out.push_str("=\"");
    escape_attr(&ann.id, out);
    out.push('"');
    if ann.action == Action::Redact {
        out.push_str(" data-manners-action=\"redact\"");
    }
    out.push('>');
}

/// Renders one text node with its spans as properly nested markup. Spans
/// open in (start asc, end desc, rule_id asc, id) order; a span that
/// partially overlaps an inner one is split and reopened around it.
fn render_text(text: &str, mut spans: Vec<Span>) -> String {
    spans.sort_by(|a, b| {
        (a.start, std::cmp::Reverse(a.end), &a.ann.rule_id, &a.ann.id).cmp(&(
            b.start,
            std::cmp::Reverse(b.end),
            &b.ann.rule_id,
            &b.ann.id,
        ))
    });
    let chars: Vec<char> = text.chars().collect();
    let mut bounds: Vec<usize> = spans.iter().flat_map(|s| [s.start, s.end]).chain([0, chars.len()]).collect();
    bounds.sort_unstable();
    bounds.dedup();

    let mut out = String::with_capacity(text.len() + spans.len() * 96);
    // Indices into `spans` of the currently open markers, outermost first.
    let mut open: Vec<usize> = Vec::new();
    for (bi, &p) in bounds.iter().enumerate() {
        // Close spans ending here, reopening any inner ones that continue.
        if let Some(depth) = open.iter().position(|&s| spans[s].end <= p) {
            let tail: Vec<usize> = open.drain(depth..).collect();
            for _ in &tail {
                out.push_str("</span>");
            }
            for s in tail {
                if spans[s].end > p {
                    open_tag(spans[s].ann, &mut out);
                    open.push(s);
                }
            }
        }
        for s in spans.iter().filter(|s| s.start == p && s.end == p) {
            open_tag(s.ann, &mut out);
            out.push_str("</span>");
        }
        for (i, s) in spans.iter().enumerate() {
            if s.start == p && s.end > p {
                open_tag(s.ann, &mut out);
                open.push(i);
            }
        }
        let Some(&next) = bounds.get(bi + 1) else { break };
        let mask = open
            .iter()
            .rev()
            .map(|&s| spans[s].ann)
            .find(|a| a.action == Action::Redact)
            .map(|a| a.mask.unwrap_or('*'));
        let segment: String = match mask {
            Some(m) => m.to_string().repeat(next - p),
            None => chars[p..next].iter().collect(),
        };
        escape_text(&segment, &mut out);
    }
    debug_assert!(open.is_empty());
    out
}

fn is_overlay(tree: &DocTree, id: NodeId) -> bool {
    tree.element(id).is_some_and(|e| e.attr(OVERLAY_ATTR).is_some())
}

fn report_markup(report: &Report) -> String {
    let mut json = String::new();
    for c in report.to_json().chars() {
        match c {
            '<' => json.push_str("\\u003c"),
            '>' => json.push_str("\\u003e"),
            '&' => json.push_str("\\u0026"),
            c => json.push(c),
        }
    }
    format!("<script type=\"application/json\" id=\"{REPORT_ELEMENT_ID}\" {OVERLAY_ATTR}=\"\">{json}</script>")
}

fn inject_overlay(tree: &DocTree, report: &Report, edits: &mut Edits) {
    let mut has_style = false;
    let mut has_script = false;
    let mut has_report = false;
    for id in tree.ids() {
        let Some(e) = tree.element(id) else { continue };
        if e.attr("id") == Some(REPORT_ELEMENT_ID) {
            if has_report {
                edits.replace.insert(id, String::new());
            } else {
                edits.replace.insert(id, report_markup(report));
                has_report = true;
            }
        } else if is_overlay(tree, id) {
            has_style |= e.attr("href") == Some(OVERLAY_STYLESHEET);
            has_script |= e.attr("src") == Some(OVERLAY_SCRIPT);
        }
    }
    let mut head = String::new();
    if !has_style {
        head = format!("<link rel=\"stylesheet\" href=\"{OVERLAY_STYLESHEET}\" {OVERLAY_ATTR}=\"\">");
    }
    let mut body = String::new();
    if !has_script {
        body.push_str(&format!("<script src=\"{OVERLAY_SCRIPT}\" defer=\"\" {OVERLAY_ATTR}=\"\"></script>"));
    }
    if !has_report {
        body.push_str(&report_markup(report));
    }
    let head_id = tree.find_element("head");
    let body_id = tree.find_element("body").or(head_id);
    match (head_id, body_id) {
        (Some(h), Some(b)) if h == b => {
            head.push_str(&body);
            edits.append.insert(h, head);
        }
        (h, b) => {
            if let Some(h) = h.filter(|_| !head.is_empty()) {
                edits.append.insert(h, head);
            }
            if let Some(b) = b.filter(|_| !body.is_empty()) {
                edits.append.insert(b, body);
            }
        }
    }
}

/// The document's text content in order, leaving out overlay elements.
pub fn extract_text(tree: &DocTree) -> String {
    let mut out = String::new();
    let mut skip_until: Option<NodeId> = None;
    for id in tree.ids() {
        if let Some(end) = skip_until {
            if tree.is_ancestor(end, id) {
                continue;
            }
            skip_until = None;
        }
        if is_overlay(tree, id) {
            skip_until = Some(id);
            continue;
        }
        if let NodeKind::Text(t) = tree.kind(id) {
            out.push_str(t);
        }
    }
    out
}
