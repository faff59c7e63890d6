//! The management API and overlay assets under `/_manners/`. These paths
//! are answered by the proxy and never forwarded.

use std::path::{Component, Path};

use http::header::{CACHE_CONTROL, CONTENT_LENGTH, CONTENT_TYPE};
use http::{HeaderValue, Method, Request, Response, StatusCode};
use http_body_util::{BodyExt, Limited};
use hyper::body::Incoming;
use manners_core::Subscription;
use manners_repo::StoreError;
use serde_json::{json, Value};

use crate::engine::Engine;
use crate::http::{full, Body};

pub const SUBSCRIPTIONS_PATH: &str = "/_manners/api/subscriptions";
pub const RULESETS_PATH: &str = "/_manners/api/rulesets";
pub const UI_PREFIX: &str = "/_manners/ui/";

const MAX_API_BODY: usize = 1024 * 1024;

/// Built-in assets, served unless `ui_dir` provides a file of the same name.
pub const BUILTIN_ASSETS: &[(&str, &str, &[u8])] = &[
    ("overlay.css", "text/css; charset=utf-8", include_bytes!("../assets/overlay.css")),
    ("overlay.js", "text/javascript; charset=utf-8", include_bytes!("../assets/overlay.js")),
    ("settings.html", "text/html; charset=utf-8", include_bytes!("../assets/settings.html")),
];

fn json_response(status: StatusCode, value: &Value) -> Response<Body> {
    let body = serde_json::to_vec_pretty(value).expect("json values serialize");
    let mut resp = Response::new(full(body.clone()));
    *resp.status_mut() = status;
    let h = resp.headers_mut();
    h.insert(CONTENT_TYPE, HeaderValue::from_static("application/json"));
    h.insert(CONTENT_LENGTH, HeaderValue::from(body.len()));
    h.insert(CACHE_CONTROL, HeaderValue::from_static("no-store"));
    resp
}

fn error(status: StatusCode, message: impl Into<String>) -> Response<Body> {
    json_response(status, &json!({"error": message.into()}))
}

fn method_not_allowed(allowed: &'static str) -> Response<Body> {
    let mut resp = error(StatusCode::METHOD_NOT_ALLOWED, "method not allowed");
    resp.headers_mut().insert(http::header::ALLOW, HeaderValue::from_static(allowed));
    resp
}

pub async fn handle(engine: &Engine, req: Request<Incoming>, uid: &str) -> Response<Body> {
    let path = req.uri().path().to_string();
    if path == SUBSCRIPTIONS_PATH {
        return match *req.method() {
            Method::GET => json_response(StatusCode::OK, &json!(engine.store.get(uid))),
            Method::PUT => put_subscription(engine, req, uid).await,
            _ => method_not_allowed("GET, PUT"),
        };
    }
    if path == RULESETS_PATH {
        return match *req.method() {
            Method::GET => json_response(StatusCode::OK, &rulesets(engine)),
            _ => method_not_allowed("GET"),
        };
    }
    if let Some(rest) = path.strip_prefix(UI_PREFIX).or((path == "/_manners/ui").then_some("")) {
        return match *req.method() {
            Method::GET | Method::HEAD => asset(engine, rest).await,
            _ => method_not_allowed("GET, HEAD"),
        };
    }
    error(StatusCode::NOT_FOUND, format!("no management endpoint at {path}"))
}

async fn put_subscription(engine: &Engine, req: Request<Incoming>, uid: &str) -> Response<Body> {
    let body = match Limited::new(req.into_body(), MAX_API_BODY).collect().await {
        Ok(b) => b.to_bytes(),
        Err(e) => return error(StatusCode::PAYLOAD_TOO_LARGE, format!("request body rejected: {e}")),
    };
    let sub: Subscription = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid subscription JSON: {e}")),
    };
    match engine.store.set(uid, sub) {
        Ok(stored) => json_response(StatusCode::OK, &json!(stored)),
        Err(e @ StoreError::Invalid(_)) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Err(e) => {
            log::error!("{e}");
            error(StatusCode::INTERNAL_SERVER_ERROR, "could not store subscription")
        }
    }
}

fn rulesets(engine: &Engine) -> Value {
    let loaded = engine.loaded();
    let synced = &loaded.synced;
    let repos: Vec<Value> = synced
        .manifests
        .iter()
        .map(|(url, m)| json!({"repo_url": url, "manifest": m}))
        .collect();
    let rulesets: Vec<Value> = synced
        .rulesets
        .iter()
        .map(|(key, rs)| {
            let rules: Vec<Value> = rs
                .rules
                .iter()
                .map(|r| {
                    json!({
                        "id": r.id,
                        "title": r.title,
                        "description": r.description,
                        "severity": r.severity,
                        "kind": r.active.kind,
                        "tags": r.tags,
                    })
                })
                .collect();
            json!({
                "repo_url": key.repo_url,
                "ruleset_id": key.ruleset_id,
                "version": rs.version,
                "title": rs.title,
                "rules": rules,
            })
        })
        .collect();
    json!({"repos": repos, "rulesets": rulesets, "diagnostics": synced.diagnostics})
}

/// A relative asset path made only of normal components.
fn safe_relative(rest: &str) -> Option<&Path> {
    if rest.is_empty() || rest.contains(['%', '\\', '\0']) {
        return None;
    }
    let path = Path::new(rest);
    path.components()
        .all(|c| matches!(c, Component::Normal(_)))
        .then_some(path)
}

fn content_type(name: &str) -> &'static str {
    match name.rsplit('.').next().unwrap_or("") {
        "css" => "text/css; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "html" => "text/html; charset=utf-8",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "woff2" => "font/woff2",
        _ => "application/octet-stream",
    }
}

async fn asset(engine: &Engine, rest: &str) -> Response<Body> {
    let name = if rest.is_empty() { "settings.html" } else { rest };
    let Some(rel) = safe_relative(name) else {
        return error(StatusCode::NOT_FOUND, "no such asset");
    };
    if let Some(dir) = &engine.config.ui_dir {
        if let Ok(bytes) = tokio::fs::read(dir.join(rel)).await {
            return static_response(content_type(name), bytes);
        }
    }
    match BUILTIN_ASSETS.iter().find(|(n, _, _)| *n == name) {
        Some((_, ct, bytes)) => static_response(ct, bytes.to_vec()),
        None => error(StatusCode::NOT_FOUND, "no such asset"),
    }
}

fn static_response(content_type: &'static str, bytes: Vec<u8>) -> Response<Body> {
    let len = bytes.len();
    let mut resp = Response::new(full(bytes));
    let h = resp.headers_mut();
    h.insert(CONTENT_TYPE, HeaderValue::from_static(content_type));
    h.insert(CONTENT_LENGTH, HeaderValue::from(len));
    h.insert(CACHE_CONTROL, HeaderValue::from_static("no-cache"));
    resp
}
