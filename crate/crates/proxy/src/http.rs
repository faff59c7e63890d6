//! Header plumbing, cookies, content decoding and body types.

use std::collections::VecDeque;
use std::io::Read;
use std::pin::Pin;
use std::task::{Context, Poll};

use bytes::Bytes;
use http::header::{HeaderMap, HeaderName, HeaderValue, CONNECTION, CONTENT_TYPE, COOKIE};
use http_body_util::combinators::UnsyncBoxBody;
use http_body_util::{BodyExt, Full};
use hyper::body::{Body as HttpBody, Frame, Incoming, SizeHint};

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;
pub type Body = UnsyncBoxBody<Bytes, BoxError>;

pub const FINDINGS_HEADER: &str = "x-manners-findings";
pub const DIAGNOSTIC_HEADER: &str = "x-manners-diagnostic";
pub const UID_COOKIE: &str = "manners_uid";

pub fn full(bytes: impl Into<Bytes>) -> Body {
    Full::new(bytes.into()).map_err(|never| match never {}).boxed_unsync()
}

pub fn incoming(body: Incoming) -> Body {
    body.map_err(BoxError::from).boxed_unsync()
}

const HOP_BY_HOP: &[&str] = &[
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "proxy-connection",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
];

/// Removes hop-by-hop headers, including those named by `Connection`.
pub fn strip_hop_by_hop(headers: &mut HeaderMap) {
    let named: Vec<HeaderName> = headers
        .get_all(CONNECTION)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .filter_map(|t| HeaderName::from_bytes(t.trim().as_bytes()).ok())
        .collect();
    for name in named {
        headers.remove(name);
    }
    for name in HOP_BY_HOP {
        headers.remove(*name);
    }
}

fn cookie_pairs(value: &str) -> impl Iterator<Item = (&str, &str)> {
    value.split(';').filter_map(|pair| {
        let (k, v) = pair.split_once('=')?;
        Some((k.trim(), v.trim()))
    })
}

/// The `manners_uid` cookie, if present and well-formed.
pub fn user_id(headers: &HeaderMap) -> Option<String> {
    headers
        .get_all(COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(cookie_pairs)
        .find(|(k, _)| *k == UID_COOKIE)
        .map(|(_, v)| v.to_string())
        .filter(|v| is_valid_uid(v))
}

pub fn is_valid_uid(v: &str) -> bool {
    !v.is_empty() && v.len() <= 128 && v.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Drops `manners_uid` from every `Cookie` header, removing headers left empty.
pub fn strip_uid_cookie(headers: &mut HeaderMap) {
    let values: Vec<HeaderValue> = headers.get_all(COOKIE).iter().cloned().collect();
    if values.is_empty() {
        return;
    }
    headers.remove(COOKIE);
    for v in values {
        let Ok(s) = v.to_str() else {
            headers.append(COOKIE, v);
            continue;
        };
        if !s.split(';').any(|p| p.split_once('=').is_some_and(|(k, _)| k.trim() == UID_COOKIE)) {
            headers.append(COOKIE, v);
            continue;
        }
        let kept: Vec<&str> = s
            .split(';')
            .map(str::trim)
            .filter(|p| !p.is_empty() && !matches!(p.split_once('='), Some((k, _)) if k.trim() == UID_COOKIE))
            .collect();
        if !kept.is_empty() {
            headers.append(COOKIE, HeaderValue::from_str(&kept.join("; ")).expect("subset of a valid value"));
        }
    }
}

pub fn set_uid_cookie(headers: &mut HeaderMap, uid: &str) {
    let cookie = format!("{UID_COOKIE}={uid}; Path=/; Max-Age=31536000; HttpOnly; SameSite=Lax");
    headers.append(http::header::SET_COOKIE, HeaderValue::from_str(&cookie).expect("uid is token-safe"));
}

pub fn media_type(headers: &HeaderMap) -> Option<String> {
    let v = headers.get(CONTENT_TYPE)?.to_str().ok()?;
    Some(v.split(';').next().unwrap_or("").trim().to_ascii_lowercase())
}

/// The `charset` parameter of `Content-Type`.
pub fn charset(headers: &HeaderMap) -> Option<String> {
    let v = headers.get(CONTENT_TYPE)?.to_str().ok()?;
    v.split(';').skip(1).find_map(|p| {
        let (k, v) = p.split_once('=')?;
        k.trim()
            .eq_ignore_ascii_case("charset")
            .then(|| v.trim().trim_matches('"').to_string())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coding {
    Identity,
    Gzip,
    Deflate,
}

/// Parses `Content-Encoding`; `None` for codings this proxy cannot undo.
pub fn coding(headers: &HeaderMap) -> Option<Coding> {
    let mut codings = headers
        .get_all(http::header::CONTENT_ENCODING)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .map(|c| c.trim().to_ascii_lowercase())
        .filter(|c| !c.is_empty() && c != "identity");
    let first = codings.next();
    if codings.next().is_some() {
        return None;
    }
    match first.as_deref() {
        None => Some(Coding::Identity),
        Some("gzip" | "x-gzip") => Some(Coding::Gzip),
        Some("deflate") => Some(Coding::Deflate),
        Some(_) => None,
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum DecodeError {
    Corrupt(String),
    TooLarge,
}

/// Undoes `coding`, failing if the result exceeds `limit` bytes.
/// `deflate` accepts both zlib-wrapped and raw streams.
pub fn decode(coding: Coding, bytes: &[u8], limit: usize) -> Result<Vec<u8>, DecodeError> {
    fn read_limited(mut r: impl Read, limit: usize) -> Result<Vec<u8>, DecodeError> {
        let mut out = Vec::new();
        r.by_ref()
            .take(limit as u64 + 1)
            .read_to_end(&mut out)
            .map_err(|e| DecodeError::Corrupt(e.to_string()))?;
        if out.len() > limit {
            return Err(DecodeError::TooLarge);
        }
        Ok(out)
    }
    match coding {
        Coding::Identity => Ok(bytes.to_vec()),
        Coding::Gzip => read_limited(flate2::read::MultiGzDecoder::new(bytes), limit),
        Coding::Deflate => read_limited(flate2::read::ZlibDecoder::new(bytes), limit)
            .or_else(|_| read_limited(flate2::read::DeflateDecoder::new(bytes), limit)),
    }
}

/// Reads `body` up to `limit` bytes. On overflow returns the data read so
/// far joined with the unread remainder, so nothing is lost.
pub async fn collect_limited(mut body: Incoming, limit: usize) -> Result<Result<Bytes, Body>, hyper::Error> {
    let mut chunks = VecDeque::new();
    let mut total = 0usize;
    while let Some(frame) = body.frame().await {
        let frame = frame?;
        if let Ok(data) = frame.into_data() {
            total += data.len();
            chunks.push_back(data);
            if total > limit {
                return Ok(Err(Prefixed { prefix: chunks, rest: body }.boxed_unsync()));
            }
        }
    }
    let mut out = Vec::with_capacity(total);
    for c in chunks {
        out.extend_from_slice(&c);
    }
    Ok(Ok(Bytes::from(out)))
}

/// Already-read chunks followed by the rest of a body.
struct Prefixed {
    prefix: VecDeque<Bytes>,
    rest: Incoming,
}

impl HttpBody for Prefixed {
    type Data = Bytes;
    type Error = BoxError;

    fn poll_frame(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<Option<Result<Frame<Bytes>, BoxError>>> {
        if let Some(chunk) = self.prefix.pop_front() {
            return Poll::Ready(Some(Ok(Frame::data(chunk))));
        }
        Pin::new(&mut self.rest).poll_frame(cx).map_err(BoxError::from)
    }

    fn is_end_stream(&self) -> bool {
        self.prefix.is_empty() && self.rest.is_end_stream()
    }

    fn size_hint(&self) -> SizeHint {
        let buffered: u64 = self.prefix.iter().map(|c| c.len() as u64).sum();
        let rest = self.rest.size_hint();
        let mut hint = SizeHint::new();
        hint.set_lower(buffered + rest.lower());
        if let Some(upper) = rest.upper() {
            hint.set_upper(buffered + upper);
        }
        hint
    }
}
