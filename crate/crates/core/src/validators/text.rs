use crate::doc::{DocTree, Namespace, NodeId, NodeKind};

use super::TextRange;

/// Reserved attribute carried by every marker element the merge inserts.
pub const MARKER_ATTR: &str = "data-manners-id";

/// Elements whose text cannot carry inline markers.
const OPAQUE: &[&str] = &[
    "script", "style", "template", "noscript", "title", "textarea", "xmp", "iframe", "noembed",
    "noframes", "plaintext",
];

/// Ancestors under which an inline marker would be dropped or reparented
/// by the parser.
const NO_INLINE: &[&str] = &["select", "option", "optgroup", "datalist", "frameset"];

/// Parents whose direct text children cannot be wrapped in place.
const NO_INLINE_PARENT: &[&str] = &["html", "head", "table", "tbody", "thead", "tfoot", "tr", "colgroup"];

/// True for text nodes that validators may anchor into: not inside raw-text
/// or otherwise opaque elements, foreign content, or an existing marker.
pub fn is_scannable(tree: &DocTree, id: NodeId) -> bool {
    if !matches!(tree.kind(id), NodeKind::Text(_)) {
        return false;
    }
    if let Some(p) = tree.parent(id).and_then(|p| tree.element(p)) {
        if p.namespace == Namespace::Html && NO_INLINE_PARENT.contains(&p.name.as_str()) {
            return false;
        }
    }
    tree.ancestors(id).all(|a| match tree.element(a) {
        Some(e) => {
            let name = e.name.as_str();
            e.namespace == Namespace::Html
                && !OPAQUE.contains(&name)
                && !NO_INLINE.contains(&name)
                && e.attr(MARKER_ATTR).is_none()
        }
        None => true,
    })
}

/// Scannable text nodes under each of `roots`, deduplicated, in document order.
pub(crate) fn scannable_text_nodes(tree: &DocTree, roots: &[NodeId]) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = roots
        .iter()
        .flat_map(|&r| tree.subtree(r))
        .filter(|&n| is_scannable(tree, n))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub(crate) fn char_offset(s: &str, byte: usize) -> usize {
    s[..byte].chars().count()
}

#[derive(Debug, Clone)]
struct Piece {
    node: NodeId,
    start: usize,
    len: usize,
}

/// The concatenated text of a subtree with a map back to its text nodes.
#[derive(Debug, Clone)]
pub struct TextIndex {
    text: String,
    pieces: Vec<Piece>,
    char_len: usize,
}

impl TextIndex {
    /// Indexes every text node under `root`, matching [`DocTree::text_of`].
    pub fn new(tree: &DocTree, root: NodeId) -> Self {
        let mut text = String::new();
        let mut pieces = Vec::new();
        let mut pos = 0;
        for n in tree.subtree(root) {
            if let Some(t) = tree.text(n) {
                let len = t.chars().count();
                if len == 0 {
                    continue;
                }
                text.push_str(t);
                pieces.push(Piece { node: n, start: pos, len });
                pos += len;
            }
        }
        Self {
            text,
            pieces,
            char_len: pos,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn char_len(&self) -> usize {
        self.char_len
    }

    /// Maps a range of the concatenated text onto the text node holding its
    /// start, clipped to that node. `None` when there is no text at all.
    pub fn anchor(&self, tree: &DocTree, start: usize, end: usize) -> Option<TextRange> {
        let piece = self
            .pieces
            .iter()
            .find(|p| start < p.start + p.len)
            .or_else(|| self.pieces.last().filter(|_| start >= self.char_len))?;
        let local_start = start.clamp(piece.start, piece.start + piece.len) - piece.start;
        let local_end = end.clamp(piece.start + local_start, piece.start + piece.len) - piece.start;
        Some(TextRange {
            node: tree.path_of(piece.node),
            start: local_start,
            end: local_end,
        })
    }
}
