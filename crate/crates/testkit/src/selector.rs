//! Random trees and selectors, and a brute-force selector oracle.
//!
//! The oracle decides membership node by node: a node matches the last
//! step when it passes that step's test and predicates among its siblings
//! and its parent (child axis) or some ancestor-or-self of its parent
//! (descendant axis) matches the previous step.

use manners_core::doc::{DocTree, NodeKind, TreeBuilder};
use manners_core::NodeId;
use rand::Rng;

const NAMES: &[&str] = &["div", "p", "span", "code", "a"];
const CLASSES: &[&str] = &["x", "y"];
const TEXTS: &[&str] = &["t1", "t2", "hello"];

/// Random tree of at most `max_nodes` nodes and element depth `max_depth`.
pub fn random_tree(rng: &mut impl Rng, max_nodes: usize, max_depth: usize) -> DocTree {
    let mut b = TreeBuilder::new();
    let mut budget = rng.gen_range(1..=max_nodes);
    grow(rng, &mut b, &mut budget, 0, max_depth);
    b.finish("https://example.org/", "", "UTF-8")
}

fn grow(rng: &mut impl Rng, b: &mut TreeBuilder, budget: &mut usize, depth: usize, max_depth: usize) {
    let width = rng.gen_range(1..=5);
    for _ in 0..width {
        if *budget == 0 {
            return;
        }
        *budget -= 1;
        match rng.gen_range(0..10) {
            0..=5 if depth < max_depth => {
                let name = NAMES[rng.gen_range(0..NAMES.len())];
                let class = CLASSES[rng.gen_range(0..CLASSES.len())];
                if rng.gen_bool(0.5) {
                    b.open(name, &[("class", class)]);
                } else {
                    b.open(name, &[]);
                }
                if rng.gen_bool(0.7) {
                    grow(rng, b, budget, depth + 1, max_depth);
                }
                b.close();
            }
            6 => {
                b.comment("c");
            }
            _ => {
                // Separate adjacent texts so each stays its own node.
                b.text(TEXTS[rng.gen_range(0..TEXTS.len())]);
                b.comment("sep");
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Test {
    Name(&'static str),
    Any,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pred {
    Pos(usize),
    Class(&'static str),
    TextIs(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub descendant: bool,
    pub test: Test,
    pub preds: Vec<Pred>,
}

/// A selector as an independent AST with its own rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sel(pub Vec<Step>);

impl Sel {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for step in &self.0 {
            s.push_str(if step.descendant { "//" } else { "/" });
            match step.test {
                Test::Name(n) => s.push_str(n),
                Test::Any => s.push('*'),
                Test::Text => s.push_str("text()"),
            }
            for p in &step.preds {
                match p {
                    Pred::Pos(n) => s.push_str(&format!("[{n}]")),
                    Pred::Class(c) => s.push_str(&format!("[@class='{c}']")),
                    Pred::TextIs(t) => s.push_str(&format!("[text()=\"{t}\"]")),
                }
            }
        }
        s
    }
}

pub fn random_selector(rng: &mut impl Rng) -> Sel {
    let n = rng.gen_range(1..=3);
    let steps = (0..n)
        .map(|i| {
            let test = match rng.gen_range(0..8) {
                0 | 1 => Test::Any,
                2 if i == n - 1 => Test::Text,
                _ => Test::Name(NAMES[rng.gen_range(0..NAMES.len())]),
            };
            let preds = (0..rng.gen_range(0..=2))
                .map(|_| match rng.gen_range(0..3) {
                    0 => Pred::Pos(rng.gen_range(1..=3)),
                    1 => Pred::Class(CLASSES[rng.gen_range(0..CLASSES.len())]),
                    _ => Pred::TextIs(TEXTS[rng.gen_range(0..TEXTS.len())]),
                })
                .collect();
            Step {
                descendant: rng.gen_bool(0.5),
                test,
                preds,
            }
        })
        .collect();
    Sel(steps)
}

fn passes_test(tree: &DocTree, n: NodeId, test: &Test) -> bool {
    match (test, tree.kind(n)) {
        (Test::Any, NodeKind::Element(_)) => true,
        (Test::Name(name), NodeKind::Element(e)) => e.name == *name,
        (Test::Text, NodeKind::Text(_)) => true,
        _ => false,
    }
}

/// The children of `parent` selected by `step`, predicates applied in order.
fn step_candidates(tree: &DocTree, parent: NodeId, step: &Step) -> Vec<NodeId> {
    let mut cands: Vec<NodeId> = tree
        .children(parent)
        .iter()
        .copied()
        .filter(|&c| passes_test(tree, c, &step.test))
        .collect();
    for p in &step.preds {
        cands = match p {
            Pred::Pos(k) => cands.get(k - 1).copied().into_iter().collect(),
            Pred::Class(c) => cands
                .into_iter()
                .filter(|&n| tree.element(n).and_then(|e| e.attr("class")) == Some(*c))
                .collect(),
            Pred::TextIs(t) => cands
                .into_iter()
                .filter(|&n| tree.children(n).iter().any(|&k| tree.text(k) == Some(*t)))
                .collect(),
        };
    }
    cands
}

fn matches_prefix(tree: &DocTree, n: NodeId, sel: &Sel, k: usize) -> bool {
    let step = &sel.0[k];
    let Some(parent) = tree.parent(n) else { return false };
    if !step_candidates(tree, parent, step).contains(&n) {
        return false;
    }
    let context_ok = |c: NodeId| if k == 0 { c == tree.root() } else { matches_prefix(tree, c, sel, k - 1) };
    if step.descendant {
        std::iter::once(parent).chain(tree.ancestors(parent)).any(context_ok)
    } else {
        context_ok(parent)
    }
}

/// Every node matched by `sel` from the root, in document order.
pub fn oracle_select(tree: &DocTree, sel: &Sel) -> Vec<NodeId> {
    let last = sel.0.len() - 1;
    tree.ids().filter(|&n| matches_prefix(tree, n, sel, last)).collect()
}
