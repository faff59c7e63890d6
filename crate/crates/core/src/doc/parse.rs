use std::sync::OnceLock;

use encoding_rs::Encoding;
use html5ever::tendril::TendrilSink;
use html5ever::{ns, parse_document, ParseOpts};
use markup5ever_rcdom::{Handle, NodeData as RcNode, RcDom};
use regex::bytes::Regex;
use sha2::{Digest, Sha256};

use super::{DocTree, Element, Namespace, NodePath, TreeBuilder};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DocError {
    #[error("document body is empty")]
    EmptyInput,
    #[error("`{0}` is not an absolute URL")]
    RelativeUrl(String),
    #[error("bytes are not valid {encoding}")]
    Encoding { encoding: String },
    #[error("no node at {0}")]
    PathNotFound(NodePath),
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Fail on undecodable bytes instead of substituting U+FFFD.
    pub strict_decoding: bool,
}

/// Number of leading bytes scanned for a `<meta charset>` declaration.
const PRESCAN_LEN: usize = 1024;

fn meta_charset(bytes: &[u8]) -> Option<&'static Encoding> {
    static META: OnceLock<Regex> = OnceLock::new();
    let re = META.get_or_init(|| {
        Regex::new(r#"(?i)<meta\b[^>]*?charset\s*=\s*["']?\s*([A-Za-z0-9_:.\-]+)"#).unwrap()
    });
    let head = &bytes[..bytes.len().min(PRESCAN_LEN)];
    let label = re.captures(head)?.get(1)?.as_bytes();
    let enc = Encoding::for_label(label)?;
    // A meta declaration of UTF-16 is treated as UTF-8 by browsers.
    if enc == encoding_rs::UTF_16LE || enc == encoding_rs::UTF_16BE {
        Some(encoding_rs::UTF_8)
    } else {
        Some(enc)
    }
}

/// Picks an encoding: BOM, then the transport label, then a `<meta>`
/// prescan, then UTF-8.
fn sniff(bytes: &[u8], declared: Option<&str>) -> (&'static Encoding, usize) {
    if let Some((enc, bom_len)) = Encoding::for_bom(bytes) {
        return (enc, bom_len);
    }
    let enc = declared
        .and_then(|l| Encoding::for_label(l.trim().as_bytes()))
        .or_else(|| meta_charset(bytes))
        .unwrap_or(encoding_rs::UTF_8);
    (enc, 0)
}

/// Parses HTML bytes into a [`DocTree`].
///
/// Error recovery follows the HTML5 tree-construction algorithm as
/// implemented by html5ever, so the same input always yields the same
/// tree. `source_hash` is the SHA-256 of `bytes`.
pub fn parse_html(
    bytes: &[u8],
    declared_encoding: Option<&str>,
    url: &str,
    options: &ParseOptions,
) -> Result<DocTree, DocError> {
    if bytes.is_empty() {
        return Err(DocError::EmptyInput);
    }
    let parsed_url = url::Url::parse(url).map_err(|_| DocError::RelativeUrl(url.to_string()))?;
    if parsed_url.cannot_be_a_base() && parsed_url.scheme() != "data" {
        return Err(DocError::RelativeUrl(url.to_string()));
    }

    let (encoding, bom_len) = sniff(bytes, declared_encoding);
    let body = &bytes[bom_len..];
    let text = if options.strict_decoding {
        encoding
            .decode_without_bom_handling_and_without_replacement(body)
            .ok_or_else(|| DocError::Encoding {
                encoding: encoding.name().to_string(),
            })?
    } else {
        encoding.decode_without_bom_handling(body).0
    };

    let dom = parse_document(RcDom::default(), ParseOpts::default()).one(text.as_ref());
    let mut builder = TreeBuilder::new();
    convert(&dom.document, &mut builder);

    let hash = hex::encode(Sha256::digest(bytes));
    Ok(builder.finish(url, &hash, encoding.name()))
}

enum Visit {
    Enter(Handle),
    Leave,
}

fn children_of(handle: &Handle) -> Vec<Handle> {
    if let RcNode::Element {
        template_contents, ..
    } = &handle.data
    {
        if let Some(contents) = template_contents.borrow().as_ref() {
            return contents.children.borrow().clone();
        }
    }
    handle.children.borrow().clone()
}

fn convert(document: &Handle, builder: &mut TreeBuilder) {
    let mut stack: Vec<Visit> = children_of(document)
        .into_iter()
        .rev()
        .map(Visit::Enter)
        .collect();
    while let Some(visit) = stack.pop() {
        let handle = match visit {
            Visit::Leave => {
                builder.close();
                continue;
            }
            Visit::Enter(h) => h,
        };
        match &handle.data {
            RcNode::Document | RcNode::ProcessingInstruction { .. } => {}
            RcNode::Doctype { name, .. } => {
                builder.doctype(name.to_string());
            }
            RcNode::Text { contents } => {
                builder.text(&contents.borrow());
            }
            RcNode::Comment { contents } => {
                builder.comment(contents);
            }
            RcNode::Element { name, attrs, .. } => {
                let namespace = match name.ns {
                    ns!(html) => Namespace::Html,
                    ns!(svg) => Namespace::Svg,
                    ns!(mathml) => Namespace::MathMl,
                    _ => Namespace::Other,
                };
                let attrs = attrs
                    .borrow()
                    .iter()
                    .map(|a| {
                        let key = match &a.name.prefix {
                            Some(p) => format!("{}:{}", p, a.name.local),
                            None => a.name.local.to_string(),
                        };
                        (key, a.value.to_string())
                    })
                    .collect();
                builder.open_element(Element {
                    name: name.local.to_string(),
                    namespace,
                    attrs,
                });
                stack.push(Visit::Leave);
                stack.extend(children_of(&handle).into_iter().rev().map(Visit::Enter));
            }
        }
    }
}
