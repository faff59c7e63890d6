//! Immutable document tree built from fetched HTML.
//!
//! Nodes live in an arena in document (pre-)order, so comparing two
//! [`NodeId`]s compares their document positions.

mod parse;
mod path;
mod serialize;

use std::collections::HashMap;

pub use parse::{parse_html, DocError, ParseOptions};
pub use path::{NodePath, PathStep, PathSyntaxError, COMMENT_STEP, TEXT_STEP};
pub use serialize::Edits;
pub(crate) use serialize::{escape_attr, escape_text};

/// Index of a node in its [`DocTree`]. Ordering follows document order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Namespace {
    Html,
    Svg,
    MathMl,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub name: String,
    pub namespace: Namespace,
    /// Attributes in source order; names include any `prefix:`.
    pub attrs: Vec<(String, String)>,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn is_html(&self, name: &str) -> bool {
        self.namespace == Namespace::Html && self.name == name
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Document,
    Element(Element),
    Text(String),
    Comment(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct NodeData {
    kind: NodeKind,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    /// 1-based index among same-name siblings.
    sibling_index: u32,
}

/// Parsed, immutable HTML document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocTree {
    nodes: Vec<NodeData>,
    doctype: Option<String>,
    source_url: String,
    source_hash: String,
    encoding: String,
}

impl DocTree {
    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn source_url(&self) -> &str {
        &self.source_url
    }

    /// Hex SHA-256 of the bytes the tree was parsed from.
    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    pub fn encoding(&self) -> &str {
        &self.encoding
    }

    pub fn doctype(&self) -> Option<&str> {
        self.doctype.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    pub fn kind(&self, id: NodeId) -> &NodeKind {
        &self.nodes[id.index()].kind
    }

    pub fn element(&self, id: NodeId) -> Option<&Element> {
        match self.kind(id) {
            NodeKind::Element(e) => Some(e),
            _ => None,
        }
    }

    pub fn text(&self, id: NodeId) -> Option<&str> {
        match self.kind(id) {
            NodeKind::Text(t) => Some(t),
            _ => None,
        }
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.index()].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.index()].children
    }

    /// All node ids in document order.
    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    /// `id` and all of its descendants, in document order.
    pub fn subtree(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let end = self.subtree_end(id);
        (id.0..end).map(NodeId)
    }

    /// Exclusive upper bound of the contiguous id range covering `id`'s subtree.
    fn subtree_end(&self, id: NodeId) -> u32 {
        let mut cur = id;
        loop {
            match self.nodes[cur.index()].children.last() {
                Some(&last) => cur = last,
                None => return cur.0 + 1,
            }
        }
    }

    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(self.parent(id), move |&n| self.parent(n))
    }

    pub fn is_ancestor(&self, ancestor: NodeId, id: NodeId) -> bool {
        ancestor < id && id.0 < self.subtree_end(ancestor)
    }

    /// Name used for this node in [`NodePath`] steps.
    pub fn step_name(&self, id: NodeId) -> &str {
        match self.kind(id) {
            NodeKind::Document => "",
            NodeKind::Element(e) => &e.name,
            NodeKind::Text(_) => TEXT_STEP,
            NodeKind::Comment(_) => COMMENT_STEP,
        }
    }

    pub fn path_of(&self, id: NodeId) -> NodePath {
        let mut steps: Vec<PathStep> = std::iter::once(id)
            .chain(self.ancestors(id))
            .filter(|&n| n != NodeId::ROOT)
            .map(|n| PathStep {
                name: self.step_name(n).to_string(),
                index: self.nodes[n.index()].sibling_index,
            })
            .collect();
        steps.reverse();
        NodePath::from_steps(steps)
    }

    pub fn resolve(&self, path: &NodePath) -> Option<NodeId> {
        let mut cur = NodeId::ROOT;
        for step in path.steps() {
            cur = *self.children(cur).iter().find(|&&c| {
                self.nodes[c.index()].sibling_index == step.index && self.step_name(c) == step.name
            })?;
        }
        Some(cur)
    }

    /// Exact text of a text node, or the concatenated descendant text of
    /// any other node.
    pub fn text_of(&self, id: NodeId) -> String {
        let mut out = String::new();
        for n in self.subtree(id) {
            if let NodeKind::Text(t) = self.kind(n) {
                out.push_str(t);
            }
        }
        out
    }

    pub fn text_at(&self, path: &NodePath) -> Result<String, DocError> {
        self.resolve(path)
            .map(|id| self.text_of(id))
            .ok_or_else(|| DocError::PathNotFound(path.clone()))
    }

    /// First element in document order with the given HTML local name.
    pub fn find_element(&self, name: &str) -> Option<NodeId> {
        self.ids()
            .find(|&n| self.element(n).is_some_and(|e| e.is_html(name)))
    }

    pub fn to_html(&self) -> String {
        serialize::serialize(self, &Edits::default())
    }

    pub fn to_html_with(&self, edits: &Edits) -> String {
        serialize::serialize(self, edits)
    }
}

/// Builds a [`DocTree`] in document order. Used by the HTML parser and
/// handy for constructing fixtures directly.
#[derive(Debug)]
pub struct TreeBuilder {
    nodes: Vec<NodeData>,
    open: Vec<NodeId>,
    doctype: Option<String>,
}

impl Default for TreeBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self {
            nodes: vec![NodeData {
                kind: NodeKind::Document,
                parent: None,
                children: Vec::new(),
                sibling_index: 1,
            }],
            open: vec![NodeId::ROOT],
            doctype: None,
        }
    }

    pub fn doctype(&mut self, name: impl Into<String>) -> &mut Self {
        self.doctype = Some(name.into());
        self
    }

    fn push(&mut self, kind: NodeKind) -> NodeId {
        let parent = *self.open.last().expect("builder always has an open node");
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(NodeData {
            kind,
            parent: Some(parent),
            children: Vec::new(),
            sibling_index: 0,
        });
        self.nodes[parent.index()].children.push(id);
        id
    }

    /// Opens an HTML element; following nodes become its children until
    /// [`TreeBuilder::close`].
    pub fn open(&mut self, name: &str, attrs: &[(&str, &str)]) -> &mut Self {
        let attrs = attrs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        self.open_element(Element {
            name: name.to_string(),
            namespace: Namespace::Html,
            attrs,
        })
    }

    pub fn open_element(&mut self, element: Element) -> &mut Self {
        let id = self.push(NodeKind::Element(element));
        self.open.push(id);
        self
    }

    pub fn close(&mut self) -> &mut Self {
        assert!(self.open.len() > 1, "close() without matching open()");
        self.open.pop();
        self
    }

    /// Appends text, merging with a directly preceding text sibling.
    pub fn text(&mut self, text: &str) -> &mut Self {
        if text.is_empty() {
            return self;
        }
        let parent = *self.open.last().unwrap();
        if let Some(&last) = self.nodes[parent.index()].children.last() {
            if let NodeKind::Text(t) = &mut self.nodes[last.index()].kind {
                t.push_str(text);
                return self;
            }
        }
        self.push(NodeKind::Text(text.to_string()));
        self
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        self.push(NodeKind::Comment(text.to_string()));
        self
    }

    pub fn finish(self, source_url: &str, source_hash: &str, encoding: &str) -> DocTree {
        let mut nodes = self.nodes;
        for i in 0..nodes.len() {
            let mut counts: HashMap<String, u32> = HashMap::new();
            let children = nodes[i].children.clone();
            for c in children {
                let name = match &nodes[c.index()].kind {
                    NodeKind::Element(e) => e.name.clone(),
                    NodeKind::Text(_) => TEXT_STEP.to_string(),
                    NodeKind::Comment(_) => COMMENT_STEP.to_string(),
                    NodeKind::Document => unreachable!("document node is never a child"),
                };
                let n = counts.entry(name).or_insert(0);
                *n += 1;
                nodes[c.index()].sibling_index = *n;
            }
        }
        DocTree {
            nodes,
            doctype: self.doctype,
            source_url: source_url.to_string(),
            source_hash: source_hash.to_string(),
            encoding: encoding.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DocTree {
        let mut b = TreeBuilder::new();
        b.open("html", &[]).open("body", &[]);
        b.open("p", &[]).text("a").open("em", &[]).text("b").close().text("c").close();
        b.open("p", &[]).comment("note").text("d").close();
        b.close().close();
        b.finish("https://example.org/", "00", "UTF-8")
    }

    #[test]
    fn element_text_concatenates_descendants() {
        let t = sample();
        let p1 = t.resolve(&"/html[1]/body[1]/p[1]".parse().unwrap()).unwrap();
        assert_eq!(t.text_of(p1), "abc");
    }

    #[test]
    fn text_free_root_is_empty() {
        let mut b = TreeBuilder::new();
        b.open("html", &[]).open("body", &[]).close().close();
        let t = b.finish("https://example.org/", "", "UTF-8");
        assert_eq!(t.text_of(t.root()), "");
    }

    #[test]
    fn text_at_missing_path() {
        let t = sample();
        let missing: NodePath = "/html[1]/body[1]/p[9]".parse().unwrap();
        assert!(matches!(t.text_at(&missing), Err(DocError::PathNotFound(_))));
    }

    #[test]
    fn every_node_path_resolves_to_itself() {
        let t = sample();
        for id in t.ids() {
            let path = t.path_of(id);
            let reparsed: NodePath = path.to_string().parse().unwrap();
            assert_eq!(t.resolve(&reparsed), Some(id), "{path}");
        }
    }

    #[test]
    fn sibling_indices_count_same_names_only() {
        let t = sample();
        let paths: Vec<String> = t.ids().map(|n| t.path_of(n).to_string()).collect();
        assert!(paths.contains(&"/html[1]/body[1]/p[2]/comment()[1]".to_string()));
        assert!(paths.contains(&"/html[1]/body[1]/p[2]/text()[1]".to_string()));
        assert!(paths.contains(&"/html[1]/body[1]/p[1]/text()[2]".to_string()));
    }

    #[test]
    fn subtree_and_ancestry() {
        let t = sample();
        let body = t.resolve(&"/html[1]/body[1]".parse().unwrap()).unwrap();
        let em = t.resolve(&"/html[1]/body[1]/p[1]/em[1]".parse().unwrap()).unwrap();
        assert!(t.is_ancestor(body, em));
        assert!(!t.is_ancestor(em, body));
        assert!(!t.is_ancestor(em, em));
        assert_eq!(t.subtree(t.root()).count(), t.len());
    }
}
