//! Conditional save: form POSTs to the configured endpoint are checked
//! before they reach the origin and blocked on error findings.

use std::sync::Arc;

use bytes::Bytes;
use http::header::{CONTENT_LENGTH, CONTENT_TYPE};
use http::{HeaderMap, HeaderValue, Method, Response, StatusCode};
use hyper::body::Incoming;
use manners_core::{Merged, Severity};

use crate::engine::Engine;
use crate::http::{collect_limited, full, media_type, Body, FINDINGS_HEADER};

pub enum Outcome {
    Forward(Body),
    Block(Response<Body>),
}

pub fn applies(engine: &Engine, method: &Method, url: &str) -> bool {
    *method == Method::POST && engine.strict_pattern.as_ref().is_some_and(|p| p.is_match(url))
}

/// Wraps submitted content in a minimal page for the pipeline.
pub fn scaffold(content: &str) -> String {
    format!(
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>Pending save</title></head><body>{content}</body></html>"
    )
}

/// Buffers the request body and checks it. Anything that cannot be
/// checked is forwarded unchanged.
pub async fn intercept(engine: &Arc<Engine>, uid: &str, url: &str, headers: &HeaderMap, body: Incoming) -> Outcome {
    let strict = engine.config.strict_save.as_ref().expect("applies() checked");
    let bytes = match collect_limited(body, engine.config.max_body_bytes).await {
        Ok(Ok(bytes)) => bytes,
        Ok(Err(rest)) => {
            log::warn!("save to {url} exceeds the size limit; forwarded unchecked");
            return Outcome::Forward(rest);
        }
        Err(e) => {
            log::warn!("reading save request for {url} failed: {e}");
            return Outcome::Block(crate::handler::plain(StatusCode::BAD_REQUEST, "request body truncated"));
        }
    };
    let forward = |bytes: Bytes| Outcome::Forward(full(bytes));
    match media_type(headers).as_deref() {
        Some("application/x-www-form-urlencoded") => {}
        other => {
            log::info!("save to {url} has content type {other:?}; forwarded unchecked");
            return forward(bytes);
        }
    }
    let Some(content) = form_urlencoded::parse(&bytes)
        .find(|(k, _)| *k == strict.content_field)
        .map(|(_, v)| v.into_owned())
    else {
        return forward(bytes);
    };

    let engine2 = Arc::clone(engine);
    let subscription = engine.store.get(uid);
    let page = scaffold(&content);
    let url_owned = url.to_string();
    let overlay = engine.config.overlay_enabled;
    let result = tokio::task::spawn_blocking(move || {
        engine2.annotate_for(&subscription, &url_owned, page.as_bytes(), Some("utf-8"), overlay)
    })
    .await;
    match result {
        Ok(Ok(merged)) if merged.report.has_errors() => Outcome::Block(block_page(&merged)),
        Ok(Ok(_)) => forward(bytes),
        Ok(Err(e)) => {
            log::warn!("save check for {url} failed, forwarding: {e}");
            forward(bytes)
        }
        Err(e) => {
            log::error!("save check for {url} panicked, forwarding: {e}");
            forward(bytes)
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// The annotated submission with a summary of the blocking findings.
fn block_page(merged: &Merged) -> Response<Body> {
    let report = &merged.report;
    let mut summary = format!(
        "<section data-manners-overlay=\"\"><h1>Save blocked</h1><p>{} error finding(s) must be fixed before saving.</p><ul>",
        report.count(Severity::Error)
    );
    for a in report.annotations.iter().filter(|a| a.severity == Severity::Error) {
        summary.push_str(&format!(
            "<li>{} / {}: {}</li>",
            escape(&a.ruleset_id),
            escape(&a.rule_id),
            escape(&a.message)
        ));
    }
    summary.push_str("</ul></section>");
    let html = String::from_utf8_lossy(&merged.html);
    let body = match html.find("<body>") {
        Some(i) => format!("{}{summary}{}", &html[..i + 6], &html[i + 6..]),
        None => format!("{summary}{html}"),
    };
    let mut resp = Response::new(full(body.clone()));
    *resp.status_mut() = StatusCode::UNPROCESSABLE_ENTITY;
    let h = resp.headers_mut();
    h.insert(CONTENT_TYPE, HeaderValue::from_static("text/html; charset=utf-8"));
    h.insert(CONTENT_LENGTH, HeaderValue::from(body.len()));
    h.insert(FINDINGS_HEADER, HeaderValue::from(report.annotations.len()));
    resp
}
