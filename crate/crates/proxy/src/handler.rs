//! Request handling: management paths, strict-save interception, and the
//! fetch, annotate, serve path for everything else.

use std::sync::Arc;

use bytes::Bytes;
use http::header::{CONTENT_ENCODING, CONTENT_LENGTH, CONTENT_RANGE, CONTENT_TYPE, ETAG, HOST};
use http::{HeaderValue, Method, Request, Response, StatusCode, Uri};
use hyper::body::Incoming;
use hyper_util::client::legacy::connect::HttpConnector;
use hyper_util::client::legacy::Client;
use hyper_util::rt::TokioExecutor;

use crate::config::Mode;
use crate::engine::Engine;
use crate::http::{
    charset, coding, collect_limited, decode, full, incoming, set_uid_cookie, strip_hop_by_hop, strip_uid_cookie,
    user_id, Body, DecodeError, DIAGNOSTIC_HEADER, FINDINGS_HEADER,
};
use crate::{api, strict};

pub type Upstream = Client<hyper_rustls::HttpsConnector<HttpConnector>, Body>;

pub fn upstream_client() -> Upstream {
    let https = hyper_rustls::HttpsConnectorBuilder::new()
        .with_webpki_roots()
        .https_or_http()
        .enable_http1()
        .build();
    Client::builder(TokioExecutor::new()).build(https)
}

pub const MANAGEMENT_PREFIX: &str = "/_manners/";

/// Shared per-server state handed to every request.
pub struct Proxy {
    pub engine: Arc<Engine>,
    pub upstream: Upstream,
}

pub(crate) fn plain(status: StatusCode, message: &str) -> Response<Body> {
    let mut resp = Response::new(full(format!("{message}\n")));
    *resp.status_mut() = status;
    resp.headers_mut()
        .insert(CONTENT_TYPE, HeaderValue::from_static("text/plain; charset=utf-8"));
    resp
}

impl Proxy {
    pub fn new(engine: Arc<Engine>) -> Self {
        Self {
            engine,
            upstream: upstream_client(),
        }
    }

    pub async fn handle(&self, req: Request<Incoming>) -> Response<Body> {
        let (uid, new_uid) = match user_id(req.headers()) {
            Some(uid) => (uid, false),
            None => (uuid::Uuid::new_v4().to_string(), true),
        };
        let mut resp = if req.uri().path().starts_with(MANAGEMENT_PREFIX) {
            api::handle(&self.engine, req, &uid).await
        } else {
            self.proxy(req, &uid).await
        };
        if new_uid {
            set_uid_cookie(resp.headers_mut(), &uid);
        }
        resp
    }

    fn target(&self, uri: &Uri) -> Result<Uri, &'static str> {
        let config = &self.engine.config;
        let target = match config.mode {
            Mode::Reverse => {
                let base = config.upstream.as_deref().expect("validated with the config");
                let pq = uri.path_and_query().map_or("/", |pq| pq.as_str());
                format!("{}{pq}", base.trim_end_matches('/'))
            }
            Mode::Forward => {
                if uri.scheme_str() != Some("http") || uri.authority().is_none() {
                    return Err("forward mode expects absolute http:// request targets");
                }
                uri.to_string()
            }
        };
        target
            .parse()
            .map_err(|_| "request target is not a valid URI")
    }

    async fn proxy(&self, req: Request<Incoming>, uid: &str) -> Response<Body> {
        if req.method() == Method::CONNECT {
            return plain(StatusCode::NOT_IMPLEMENTED, "CONNECT tunnelling is not supported");
        }
        let target = match self.target(req.uri()) {
            Ok(t) => t,
            Err(message) => return plain(StatusCode::BAD_REQUEST, message),
        };
        let url = target.to_string();
        let (mut parts, body) = req.into_parts();
        strip_hop_by_hop(&mut parts.headers);
        strip_uid_cookie(&mut parts.headers);
        let authority = target.authority().expect("absolute target").as_str();
        parts
            .headers
            .insert(HOST, HeaderValue::from_str(authority).expect("authority is a valid header"));
        let is_head = parts.method == Method::HEAD;

        let body = if strict::applies(&self.engine, &parts.method, &url) {
            match strict::intercept(&self.engine, uid, &url, &parts.headers, body).await {
                strict::Outcome::Block(resp) => return resp,
                strict::Outcome::Forward(body) => body,
            }
        } else {
            incoming(body)
        };

        parts.uri = target;
        parts.version = http::Version::HTTP_11;
        let upstream_req = Request::from_parts(parts, body);
        let timeout = self.engine.config.upstream_timeout();
        let resp = match tokio::time::timeout(timeout, self.upstream.request(upstream_req)).await {
            Ok(Ok(resp)) => resp,
            Ok(Err(e)) => {
                log::warn!("origin request for {url} failed: {e}");
                return plain(StatusCode::BAD_GATEWAY, "origin unreachable");
            }
            Err(_) => {
                log::warn!("origin request for {url} timed out");
                return plain(StatusCode::GATEWAY_TIMEOUT, "origin timed out");
            }
        };
        self.respond(resp, &url, uid, is_head).await
    }

    fn eligible(&self, resp: &Response<Incoming>, is_head: bool) -> bool {
        let status = resp.status();
        let type_ok = resp
            .headers()
            .get(CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|ct| self.engine.config.is_eligible_type(ct));
        !is_head
            && status.is_success()
            && !matches!(status.as_u16(), 204..=206)
            && !resp.headers().contains_key(CONTENT_RANGE)
            && type_ok
    }

    async fn respond(&self, resp: Response<Incoming>, url: &str, uid: &str, is_head: bool) -> Response<Body> {
        let eligible = self.eligible(&resp, is_head);
        let (mut parts, body) = resp.into_parts();
        strip_hop_by_hop(&mut parts.headers);
        if !eligible {
            return Response::from_parts(parts, incoming(body));
        }
        let limit = self.engine.config.max_body_bytes;
        let declared_len = parts
            .headers
            .get(CONTENT_LENGTH)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<u64>().ok());
        if declared_len.is_some_and(|n| n > limit as u64) {
            return degraded(parts, incoming(body), "body-too-large");
        }
        let Some(coding) = coding(&parts.headers) else {
            return degraded(parts, incoming(body), "unsupported-encoding");
        };
        let original = match collect_limited(body, limit).await {
            Ok(Ok(bytes)) => bytes,
            Ok(Err(rest)) => return degraded(parts, rest, "body-too-large"),
            Err(e) => {
                log::warn!("reading origin body for {url} failed: {e}");
                return plain(StatusCode::BAD_GATEWAY, "origin body truncated");
            }
        };
        let decoded = match decode(coding, &original, limit) {
            Ok(d) => d,
            Err(DecodeError::TooLarge) => return degraded(parts, full(original), "body-too-large"),
            Err(DecodeError::Corrupt(e)) => {
                log::warn!("cannot decode body of {url}: {e}");
                return with_findings(parts, original, -1);
            }
        };

        let engine = Arc::clone(&self.engine);
        let subscription = engine.store.get(uid);
        let declared = charset(&parts.headers);
        let url_owned = url.to_string();
        let overlay = engine.config.overlay_enabled;
        let result = tokio::task::spawn_blocking(move || {
            engine.annotate_for(&subscription, &url_owned, &decoded, declared.as_deref(), overlay)
        })
        .await;
        let merged = match result {
            Ok(Ok(m)) => m,
            Ok(Err(e)) => {
                log::warn!("pipeline failed for {url}: {e}");
                return with_findings(parts, original, -1);
            }
            Err(e) => {
                log::error!("pipeline panicked for {url}: {e}");
                return with_findings(parts, original, -1);
            }
        };
        for d in &merged.report.diagnostics {
            log::debug!("{url}: {d}");
        }
        let findings = merged.report.annotations.len() as i64;
        if merged.report.stats.rules_fired == 0 && !overlay {
            return with_findings(parts, original, findings);
        }

        let h = &mut parts.headers;
        h.remove(CONTENT_ENCODING);
        h.remove(ETAG);
        h.remove("content-md5");
        let media = crate::http::media_type(h).unwrap_or_else(|| "text/html".into());
        h.insert(
            CONTENT_TYPE,
            HeaderValue::from_str(&format!("{media}; charset=utf-8")).expect("media type came from a header"),
        );
        with_findings(parts, Bytes::from(merged.html), findings)
    }
}

fn with_findings(mut parts: http::response::Parts, body: Bytes, findings: i64) -> Response<Body> {
    parts.headers.insert(CONTENT_LENGTH, HeaderValue::from(body.len()));
    parts.headers.insert(FINDINGS_HEADER, HeaderValue::from(findings));
    Response::from_parts(parts, full(body))
}

fn degraded(mut parts: http::response::Parts, body: Body, diagnostic: &'static str) -> Response<Body> {
    parts
        .headers
        .insert(DIAGNOSTIC_HEADER, HeaderValue::from_static(diagnostic));
    Response::from_parts(parts, body)
}
