use std::io::Write;

use manners_proxy::{Mode, StrictSave, DIAGNOSTIC_HEADER};
use manners_testkit::fixtures::{regex_rule, Published};
use manners_testkit::harness::{embedded_report, findings, marker_ids, subscribe, ProxyHarness};
use manners_testkit::mock::Route;
use serde_json::{json, Value};

const PAGE: &str = "<!DOCTYPE html><html><head><title>t</title></head><body><p>one badword here</p></body></html>";

fn bad_rules() -> Vec<Published> {
    vec![Published::new("basics", "1", &[regex_rule("no-badword", "badword", ".")])]
}

fn error_rule(id: &str, pattern: &str) -> Value {
    let mut r = regex_rule(id, pattern, ".");
    r["severity"] = json!("error");
    r
}

#[tokio::test]
async fn ineligible_content_passes_through_byte_identical() {
    let h = ProxyHarness::start(&bad_rules(), |_| {}).await;
    let css = b"p { content: \"badword\" }".to_vec();
    h.origin.route("/style.css", Route::ok("text/css", css.clone()).header("x-origin", "yes"));
    let resp = h.get("/style.css", None).await;
    assert_eq!(resp.status(), 200);
    assert!(resp.headers().get("x-manners-findings").is_none());
    assert_eq!(resp.headers().get("x-origin").unwrap(), "yes");
    assert_eq!(resp.bytes().await.unwrap().to_vec(), css);
}

#[tokio::test]
async fn html_without_firing_rules_is_untouched() {
    let rules = vec![Published::new("basics", "1", &[regex_rule("r", "badword", "^ftp:")])];
    let h = ProxyHarness::start(&rules, |_| {}).await;
    h.origin.route("/page", Route::html(PAGE));
    let resp = h.get("/page", None).await;
    assert_eq!(findings(&resp), Some(0));
    assert_eq!(resp.bytes().await.unwrap(), PAGE.as_bytes());
}

#[tokio::test]
async fn one_match_yields_one_marker() {
    let h = ProxyHarness::start(&bad_rules(), |_| {}).await;
    h.origin.route("/page", Route::html(PAGE).header("etag", "\"v1\""));
    let resp = h.get("/page", None).await;
    assert_eq!(findings(&resp), Some(1));
    assert!(resp.headers().get("etag").is_none());
    let declared: usize = resp.headers()["content-length"].to_str().unwrap().parse().unwrap();
    let body = resp.bytes().await.unwrap();
    assert_eq!(declared, body.len());
    assert_eq!(marker_ids(&body), ["m0"]);
    // Overlay disabled: nothing else is injected.
    assert!(embedded_report(&body).is_none());
}

#[tokio::test]
async fn overlay_embeds_report_and_assets() {
    let h = ProxyHarness::start(&bad_rules(), |c| c.overlay_enabled = true).await;
    h.origin.route("/page", Route::html(PAGE));
    let resp = h.get("/page", None).await;
    assert_eq!(findings(&resp), Some(1));
    let body = resp.bytes().await.unwrap();
    let text = String::from_utf8(body.to_vec()).unwrap();
    assert!(text.contains("href=\"/_manners/ui/overlay.css\""));
    assert!(text.contains("src=\"/_manners/ui/overlay.js\""));
    let report = embedded_report(&body).expect("report element");
    assert_eq!(report.annotations.len(), 1);
    assert_eq!(report.url, h.origin.url("/page"));

    for asset in ["/_manners/ui/overlay.css", "/_manners/ui/overlay.js", "/_manners/ui/"] {
        let resp = h.get(asset, None).await;
        assert_eq!(resp.status(), 200, "{asset}");
    }
    assert_eq!(h.origin.hits("/_manners/ui/overlay.js"), 0);
}

#[tokio::test]
async fn gzip_bodies_are_decoded_and_served_as_identity() {
    let h = ProxyHarness::start(&bad_rules(), |_| {}).await;
    let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    gz.write_all(PAGE.as_bytes()).unwrap();
    h.origin
        .route("/page", Route::html(gz.finish().unwrap()).header("content-encoding", "gzip"));
    let resp = h.get("/page", None).await;
    assert_eq!(findings(&resp), Some(1));
    assert!(resp.headers().get("content-encoding").is_none());
    assert_eq!(marker_ids(&resp.bytes().await.unwrap()).len(), 1);
}

#[tokio::test]
async fn undecodable_and_oversized_bodies_pass_through() {
    let h = ProxyHarness::start(&bad_rules(), |c| c.max_body_bytes = 64).await;
    h.origin
        .route("/br", Route::html(b"\x1b\x00\x00not-really-brotli".to_vec()).header("content-encoding", "br"));
    let resp = h.get("/br", None).await;
    assert_eq!(resp.headers()[DIAGNOSTIC_HEADER], "unsupported-encoding");
    assert_eq!(resp.headers()["content-encoding"], "br");
    assert_eq!(&resp.bytes().await.unwrap()[..], b"\x1b\x00\x00not-really-brotli");

    let big = format!("<p>{}</p>", "badword ".repeat(100));
    h.origin.route("/big", Route::html(big.clone()));
    let resp = h.get("/big", None).await;
    assert_eq!(resp.headers()[DIAGNOSTIC_HEADER], "body-too-large");
    assert!(findings(&resp).is_none());
    assert_eq!(resp.bytes().await.unwrap(), big.as_bytes());
}

#[tokio::test]
async fn pipeline_failure_serves_original_body() {
    let h = ProxyHarness::start(&bad_rules(), |_| {}).await;
    h.origin.route("/empty", Route::html(Vec::new()));
    let resp = h.get("/empty", None).await;
    assert_eq!(resp.status(), 200);
    assert_eq!(findings(&resp), Some(-1));
    assert!(resp.bytes().await.unwrap().is_empty());
}

#[tokio::test]
async fn unreachable_origin_is_a_gateway_error() {
    let mut h = ProxyHarness::start(&bad_rules(), |_| {}).await;
    h.origin.stop();
    let resp = h.get("/page", None).await;
    assert_eq!(resp.status(), 502);
}

#[tokio::test]
async fn origin_status_and_headers_are_preserved() {
    let h = ProxyHarness::start(&bad_rules(), |_| {}).await;
    h.origin
        .route("/moved", Route::html("<p>badword</p>").status(301).header("location", "/elsewhere"));
    let resp = h.get("/moved", None).await;
    assert_eq!(resp.status(), 301);
    assert_eq!(resp.headers()["location"], "/elsewhere");
    assert!(findings(&resp).is_none());
    assert_eq!(resp.bytes().await.unwrap(), "<p>badword</p>".as_bytes());
    // Unknown origin path: the origin's 404 is relayed.
    assert_eq!(h.get("/nowhere", None).await.status(), 404);
}

#[tokio::test]
async fn uid_cookie_is_issued_and_never_forwarded() {
    let h = ProxyHarness::start(&bad_rules(), |_| {}).await;
    h.origin.route("/page", Route::html(PAGE));
    let resp = h.get("/page", None).await;
    let set_cookie = resp.headers()["set-cookie"].to_str().unwrap().to_string();
    assert!(set_cookie.starts_with("manners_uid="), "{set_cookie}");

    let resp = h
        .client
        .get(h.url("/page"))
        .header("cookie", "session=abc; manners_uid=alice")
        .header("connection", "x-hop")
        .header("x-hop", "1")
        .send()
        .await
        .unwrap();
    assert!(resp.headers().get("set-cookie").is_none());
    let reqs = h.origin.requests();
    let last = reqs.last().unwrap();
    assert_eq!(last.header("cookie"), Some(&b"session=abc"[..]));
    assert!(last.header("x-hop").is_none());
    assert!(reqs[0].header("cookie").is_none());
}

#[tokio::test]
async fn request_bodies_are_forwarded_unchanged() {
    let h = ProxyHarness::start(&bad_rules(), |_| {}).await;
    h.origin.route("/submit", Route::ok("text/plain", "ok"));
    let body = vec![0u8, 1, 2, 255, b'b', b'a', b'd'];
    let resp = h.client.post(h.url("/submit?x=1")).body(body.clone()).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let last = h.origin.requests().pop().unwrap();
    assert_eq!(last.method, "POST");
    assert_eq!(last.target, "/submit?x=1");
    assert_eq!(last.body, body);
}

#[tokio::test]
async fn subscriptions_api_round_trips_and_validates() {
    let rules = vec![
        Published::new("one", "1", &[regex_rule("a", "badword", ".")]),
        Published::new("two", "1", &[regex_rule("b", "here", ".")]),
    ];
    let h = ProxyHarness::start(&rules, |_| {}).await;
    let api = h.url("/_manners/api/subscriptions");
    let cookie = "manners_uid=alice";

    let first: Value = h.client.get(&api).header("cookie", cookie).send().await.unwrap().json().await.unwrap();
    assert_eq!(first["user_id"], "alice");
    assert_eq!(first["entries"].as_array().unwrap().len(), 2);

    let mut changed = first.clone();
    changed["entries"][1]["enabled"] = json!(false);
    let put = h.client.put(&api).header("cookie", cookie).json(&changed).send().await.unwrap();
    assert_eq!(put.status(), 200);
    let again: Value = h.client.get(&api).header("cookie", cookie).send().await.unwrap().json().await.unwrap();
    assert_eq!(again, changed);

    let mut dup = first.clone();
    let e = dup["entries"][0].clone();
    dup["entries"].as_array_mut().unwrap().push(e);
    let resp = h.client.put(&api).header("cookie", cookie).json(&dup).send().await.unwrap();
    assert_eq!(resp.status(), 400);
    let msg: Value = resp.json().await.unwrap();
    assert!(msg["error"].as_str().unwrap().contains("must be unique"), "{msg}");

    let resp = h.client.put(&api).header("cookie", cookie).body("{nope").send().await.unwrap();
    assert_eq!(resp.status(), 400);

    // A user who never saved anything still gets the default.
    let bob: Value = h.client.get(&api).header("cookie", "manners_uid=bob").send().await.unwrap().json().await.unwrap();
    assert_eq!(bob["entries"].as_array().unwrap().len(), 2);
    assert_eq!(h.origin.total_hits(), 0);
}

#[tokio::test]
async fn rulesets_api_and_unknown_paths() {
    let h = ProxyHarness::start(&bad_rules(), |_| {}).await;
    let v: Value = h.get("/_manners/api/rulesets", None).await.json().await.unwrap();
    assert_eq!(v["rulesets"][0]["ruleset_id"], "basics");
    assert_eq!(v["rulesets"][0]["rules"][0]["id"], "no-badword");
    assert_eq!(v["repos"][0]["repo_url"], h.repo_url.as_str());

    assert_eq!(h.get("/_manners/api/nope", None).await.status(), 404);
    assert_eq!(h.get("/_manners/ui/../Cargo.toml", None).await.status(), 404);
    assert_eq!(h.get("/_manners/ui/%2e%2e/x", None).await.status(), 404);
    assert_eq!(h.get("/_manners/ui/missing.js", None).await.status(), 404);
    let resp = h.client.delete(h.url("/_manners/api/rulesets")).send().await.unwrap();
    assert_eq!(resp.status(), 405);
    assert_eq!(h.origin.total_hits(), 0);
}

#[tokio::test]
async fn ui_dir_overrides_builtin_assets() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("overlay.js"), "// custom").unwrap();
    let ui = dir.path().to_path_buf();
    let h = ProxyHarness::start(&bad_rules(), move |c| c.ui_dir = Some(ui)).await;
    assert_eq!(h.get("/_manners/ui/overlay.js", None).await.text().await.unwrap(), "// custom");
    assert_eq!(h.get("/_manners/ui/overlay.css", None).await.status(), 200);
}

#[tokio::test]
async fn disabling_a_ruleset_removes_its_findings() {
    let rules = vec![
        Published::new("one", "1", &[regex_rule("a", "badword", ".")]),
        Published::new("two", "1", &[regex_rule("b", "here|one", ".")]),
    ];
    let h = ProxyHarness::start(&rules, |_| {}).await;
    h.origin.route("/page", Route::html(PAGE));
    assert_eq!(findings(&h.get("/page", Some("carol")).await), Some(3));

    let mut sub = subscribe(&h.repo_url, &["one", "two"]);
    sub.entries[1].enabled = false;
    let put = h
        .client
        .put(h.url("/_manners/api/subscriptions"))
        .header("cookie", "manners_uid=carol")
        .json(&sub)
        .send()
        .await
        .unwrap();
    assert_eq!(put.status(), 200);
    assert_eq!(findings(&h.get("/page", Some("carol")).await), Some(1));

    sub.entries[0].disabled_rule_ids.insert("a".into());
    h.engine.store.set("carol", sub).unwrap();
    assert_eq!(findings(&h.get("/page", Some("carol")).await), Some(0));
}

fn strict(c: &mut manners_proxy::ProxyConfig) {
    c.strict_save = Some(StrictSave {
        endpoint_pattern: "action=submit".into(),
        content_field: "text".into(),
    });
}

#[tokio::test]
async fn strict_save_blocks_error_content_only() {
    let rules = vec![Published::new(
        "basics",
        "1",
        &[error_rule("no-badword", "badword"), regex_rule("no-todo", "TODO", ".")],
    )];
    let h = ProxyHarness::start(&rules, strict).await;
    h.origin.route("/wiki", Route::ok("text/plain", "saved"));
    let form = |text: &str| form_body(&[("title", "Page"), ("text", text)]);

    let blocked = h
        .client
        .post(h.url("/wiki?action=submit"))
        .header("content-type", "application/x-www-form-urlencoded")
        .body(form("a badword <b>here</b>"))
        .send()
        .await
        .unwrap();
    assert_eq!(blocked.status(), 422);
    assert_eq!(findings(&blocked), Some(1));
    let page = blocked.text().await.unwrap();
    assert!(page.contains("Save blocked"));
    assert_eq!(h.origin.total_hits(), 0);

    let warn_only = form("a TODO here");
    let resp = h
        .client
        .post(h.url("/wiki?action=submit"))
        .header("content-type", "application/x-www-form-urlencoded")
        .body(warn_only.clone())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(h.origin.requests().pop().unwrap().body, warn_only.as_bytes());

    let other = form("badword");
    let resp = h
        .client
        .post(h.url("/wiki?action=view"))
        .header("content-type", "application/x-www-form-urlencoded")
        .body(other.clone())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(h.origin.requests().pop().unwrap().body, other.as_bytes());
}

#[tokio::test]
async fn strict_save_forwards_what_it_cannot_check() {
    let rules = vec![Published::new("basics", "1", &[error_rule("no-badword", "badword")])];
    let h = ProxyHarness::start(&rules, strict).await;
    h.origin.route("/wiki", Route::ok("text/plain", "saved"));

    let multipart = "--x\r\nContent-Disposition: form-data; name=\"text\"\r\n\r\nbadword\r\n--x--\r\n";
    let resp = h
        .client
        .post(h.url("/wiki?action=submit"))
        .header("content-type", "multipart/form-data; boundary=x")
        .body(multipart)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(h.origin.requests().pop().unwrap().body, multipart.as_bytes());

    let no_field = form_body(&[("other", "badword")]);
    let resp = h
        .client
        .post(h.url("/wiki?action=submit"))
        .header("content-type", "application/x-www-form-urlencoded")
        .body(no_field.clone())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(h.origin.total_hits(), 2);
}

fn form_body(pairs: &[(&str, &str)]) -> String {
    let mut s = form_urlencoded::Serializer::new(String::new());
    for (k, v) in pairs {
        s.append_pair(k, v);
    }
    s.finish()
}

#[tokio::test]
async fn forward_mode_uses_absolute_targets() {
    let h = ProxyHarness::start(&bad_rules(), |c| {
        c.mode = Mode::Forward;
        c.upstream = None;
    })
    .await;
    h.origin.route("/page", Route::html(PAGE));
    let client = reqwest::Client::builder()
        .proxy(reqwest::Proxy::http(h.url("")).unwrap())
        .build()
        .unwrap();
    let resp = client.get(h.origin.url("/page")).send().await.unwrap();
    assert_eq!(findings(&resp), Some(1));
    assert_eq!(h.origin.hits("/page"), 1);

    // Origin-form targets cannot be routed in forward mode.
    assert_eq!(h.get("/page", None).await.status(), 400);
}
