//! Random pages and reports for the merge properties, plus a masking
//! oracle computed straight from the original tree's text nodes.

use std::collections::BTreeMap;

use manners_core::doc::{DocTree, NodeKind};
use manners_core::validators::{is_scannable, Action, TextRange};
use manners_core::{Annotation, NodeId, Report, Severity};
use rand::Rng;

const BLOCKS: &[&str] = &["p", "div", "li", "td", "pre", "h2"];
const INLINE: &[&str] = &["em", "b", "code", "a", "span"];
const WORDS: &[&str] = &["alpha", "beta", "x < y", "a & b", "naïve", "  ", "\n", "ok", "日本"];

fn words(rng: &mut impl Rng) -> String {
    (0..rng.gen_range(1..=4)).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Random, mostly well-formed HTML, sometimes with unclosed tags,
/// comments, scripts and tables to exercise recovery.
pub fn random_html(rng: &mut impl Rng) -> String {
    let mut s = String::from("<!DOCTYPE html><html><head><title>");
    s.push_str(&escape(&words(rng)));
    s.push_str("</title>");
    if rng.gen_bool(0.3) {
        s.push_str("<style>p { color: red }</style>");
    }
    s.push_str("</head><body>");
    for _ in 0..rng.gen_range(1..=8) {
        match rng.gen_range(0..10) {
            0 => s.push_str(&format!("<script>var s = \"{}\";</script>", words(rng).replace(['\n', '"'], ""))),
            1 => s.push_str(&format!("<!-- {} -->", words(rng).replace('-', ""))),
            2 => s.push_str(&format!(
                "<table><tr><td>{}</td><td>{}</td></tr></table>",
                escape(&words(rng)),
                escape(&words(rng))
            )),
            3 => s.push_str(&format!("<p>{}", escape(&words(rng)))),
            _ => {
                let tag = BLOCKS[rng.gen_range(0..BLOCKS.len())];
                let tag = if tag == "li" { "p" } else if tag == "td" { "div" } else { tag };
                s.push_str(&format!("<{tag}>"));
                for _ in 0..rng.gen_range(1..=3) {
                    if rng.gen_bool(0.4) {
                        let i = INLINE[rng.gen_range(0..INLINE.len())];
                        s.push_str(&format!("<{i}>{}</{i}>", escape(&words(rng))));
                    } else {
                        s.push_str(&escape(&words(rng)));
                    }
                }
                s.push_str(&format!("</{tag}>"));
            }
        }
    }
    s.push_str("</body></html>");
    s
}

/// Text nodes that may carry anchors, with their lengths in code points.
pub fn anchorable(tree: &DocTree) -> Vec<(NodeId, usize)> {
    tree.ids()
        .filter(|&n| is_scannable(tree, n))
        .filter_map(|n| tree.text(n).map(|t| (n, t.chars().count())))
        .collect()
}

fn empty_report(tree: &DocTree) -> Report {
    Report {
        schema_version: 1,
        url: tree.source_url().to_string(),
        generated_at: "2026-01-01T00:00:00.000Z".into(),
        doc_hash: tree.source_hash().to_string(),
        annotations: Vec::new(),
        diagnostics: Vec::new(),
        stats: Default::default(),
    }
}

fn annotation(i: usize, rule: &str, anchor: Option<TextRange>) -> Annotation {
    Annotation {
        id: format!("m{i}"),
        ruleset_id: "rs".into(),
        rule_id: rule.into(),
        severity: Severity::Warning,
        message: "finding <with> & markup".into(),
        anchor,
        action: Action::Annotate,
        mask: None,
        fix_hint: None,
    }
}

/// Annotate-only report with random, possibly overlapping or empty,
/// ranges plus the occasional page-level annotation.
pub fn random_annotate_report(rng: &mut impl Rng, tree: &DocTree) -> Report {
    let nodes = anchorable(tree);
    let mut report = empty_report(tree);
    for i in 0..rng.gen_range(0..=12) {
        let anchor = (!nodes.is_empty() && rng.gen_bool(0.9)).then(|| {
            let (n, len) = nodes[rng.gen_range(0..nodes.len())];
            let start = rng.gen_range(0..=len);
            let end = rng.gen_range(start..=len);
            TextRange {
                node: tree.path_of(n),
                start,
                end,
            }
        });
        let rule = ["r1", "r2", "r3"][rng.gen_range(0..3)];
        report.annotations.push(annotation(i, rule, anchor));
    }
    report
}

/// Redact report whose ranges never overlap, masked with `mask`.
pub fn random_redact_report(rng: &mut impl Rng, tree: &DocTree, mask: char) -> Report {
    let mut report = empty_report(tree);
    let mut i = 0;
    for (n, len) in anchorable(tree) {
        let mut cursor = 0;
        while cursor < len && rng.gen_bool(0.4) {
            let start = rng.gen_range(cursor..len);
            let end = rng.gen_range(start + 1..=len);
            let mut a = annotation(i, "redact", Some(TextRange {
                node: tree.path_of(n),
                start,
                end,
            }));
            a.action = Action::Redact;
            a.mask = Some(mask);
            report.annotations.push(a);
            i += 1;
            cursor = end;
        }
    }
    report
}

/// All text of `tree` in document order with every redact range masked.
pub fn masked_text(tree: &DocTree, report: &Report) -> String {
    let mut ranges: BTreeMap<NodeId, Vec<(usize, usize, char)>> = BTreeMap::new();
    for a in &report.annotations {
        if let (Action::Redact, Some(anchor)) = (a.action, &a.anchor) {
            let n = tree.resolve(&anchor.node).expect("anchor resolves");
            ranges.entry(n).or_default().push((anchor.start, anchor.end, a.mask.unwrap_or('*')));
        }
    }
    let mut out = String::new();
    for n in tree.ids() {
        if let NodeKind::Text(t) = tree.kind(n) {
            for (i, c) in t.chars().enumerate() {
                let mask = ranges
                    .get(&n)
                    .and_then(|rs| rs.iter().find(|(s, e, _)| *s <= i && i < *e))
                    .map(|r| r.2);
                out.push(mask.unwrap_or(c));
            }
        }
    }
    out
}
