use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use manners_testkit::fixtures::{publish, regex_rule, ruleset_json, Published};
use manners_testkit::mock::{MockServer, Route};
use serde_json::{json, Value};

fn manners(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manners")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> String {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p.to_str().unwrap().to_string()
}

fn rules(dir: &Path, severity: &str) -> String {
    let mut r = regex_rule("no-badword", "badword", ".");
    r["severity"] = json!(severity);
    write(dir, "rules.json", &ruleset_json("basics", "1", &[r]))
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn check_without_findings_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let rules = rules(dir.path(), "error");
    let page = write(dir.path(), "page.html", b"<p>all good</p>");
    let out = manners(&["check", "--rules", &rules, &page]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["annotations"], json!([]));
    assert!(r["url"].as_str().unwrap().starts_with("file:///"));
    assert!(r["url"].as_str().unwrap().ends_with("/page.html"));
}

#[test]
fn error_finding_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let rules = rules(dir.path(), "error");
    let page = write(dir.path(), "page.html", b"<p>a badword</p>");
    let out = manners(&["check", "--rules", &rules, "--url", "https://wiki.example/P", &page]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["annotations"].as_array().unwrap().len(), 1);
    assert_eq!(r["url"], "https://wiki.example/P");
    assert_eq!(r["annotations"][0]["severity"], "error");
}

#[test]
fn warnings_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let rules = rules(dir.path(), "warning");
    let page = write(dir.path(), "page.html", b"<p>a badword</p>");
    let out = manners(&["check", "--rules", &rules, &page]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["annotations"].as_array().unwrap().len(), 1);
}

#[test]
fn malformed_rules_exit_two_with_empty_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let rules = write(dir.path(), "bad.json", br#"{"schema_version": 1, "id": "x"}"#);
    let page = write(dir.path(), "page.html", b"<p>x</p>");
    let out = manners(&["check", "--rules", &rules, &page]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(manners(&["check"]).status.code(), Some(2));
    assert_eq!(manners(&["bogus"]).status.code(), Some(2));
    let out = manners(&["check", "--rules", "/nonexistent/rules.json", "/nonexistent/page.html"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn annotate_writes_html_and_optional_report() {
    let dir = tempfile::tempdir().unwrap();
    let rules = rules(dir.path(), "warning");
    let page = write(dir.path(), "page.html", b"<p>a badword</p>");
    let out = manners(&["annotate", "--rules", &rules, "--report", &page]);
    assert_eq!(out.status.code(), Some(0));
    let html = String::from_utf8(out.stdout).unwrap();
    assert!(html.contains("data-manners-id=\"m0\""), "{html}");
    assert!(!html.contains("manners-report"));
    let r: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(r["annotations"].as_array().unwrap().len(), 1);

    let out = manners(&["annotate", "--rules", &rules, "--overlay", &page]);
    let html = String::from_utf8(out.stdout).unwrap();
    assert!(html.contains("id=\"manners-report\""));
    assert!(out.stderr.is_empty());
}

#[test]
fn page_from_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let rules = rules(dir.path(), "error");
    let mut child = Command::new(env!("CARGO_BIN_EXE_manners"))
        .args(["check", "--rules", &rules, "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"<p>badword badword</p>").unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["annotations"].as_array().unwrap().len(), 2);
}

#[test]
fn url_pattern_sees_default_file_url() {
    let dir = tempfile::tempdir().unwrap();
    let r = regex_rule("local-only", "x", "^file:///.*\\.html$");
    let rules = write(dir.path(), "rules.json", &ruleset_json("local", "1", &[r]));
    let page = write(dir.path(), "page.html", b"<p>x</p>");
    assert_eq!(report(&manners(&["check", "--rules", &rules, &page]))["annotations"].as_array().unwrap().len(), 1);
    let out = manners(&["check", "--rules", &rules, "--url", "https://elsewhere/", &page]);
    assert_eq!(report(&out)["annotations"].as_array().unwrap().len(), 0);
}

#[test]
fn rules_from_url() {
    let server = MockServer::start();
    let mut r = regex_rule("no-badword", "badword", ".");
    r["severity"] = json!("error");
    server.route("/rules.json", Route::json(ruleset_json("basics", "1", &[r])));
    let dir = tempfile::tempdir().unwrap();
    let page = write(dir.path(), "page.html", b"<p>badword</p>");
    let out = manners(&["check", "--rules", &server.url("/rules.json"), &page]);
    assert_eq!(out.status.code(), Some(1));
    let out = manners(&["check", "--rules", &server.url("/missing.json"), &page]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn repo_sync_fills_the_cache() {
    let server = MockServer::start();
    let repo = publish(&server, "/repo", &[Published::new("basics", "1", &[regex_rule("a", "x", ".")])]);
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = manners(&["repo", "sync", &repo, "--cache-dir", cache.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = report(&out);
    assert_eq!(summary["rulesets"][0]["ruleset_id"], "basics");
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);

    let mut down = MockServer::start();
    let url = down.url("/repo");
    down.stop();
    let out = manners(&["repo", "sync", &url]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("repo-unavailable"));
}

#[test]
fn serve_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "proxy.toml", b"mode = \"reverse\"\n");
    let out = manners(&["serve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("upstream"));
}
