//! Acceptance gate: runs each end-to-end criterion and prints one
//! PASS/FAIL line per criterion. Exits non-zero if any criterion fails.

use std::future::Future;
use std::io::Write;
use std::panic::AssertUnwindSafe;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use manners_core::annotator::extract_text;
use manners_core::doc::TreeBuilder;
use manners_core::validators::regex_filter::{validate_regex_filter, RegexFilterParams};
use manners_core::validators::template::Template;
use manners_core::{merge, parse_html, DocTree, ParseOptions, Registry, Selector};
use manners_proxy::StrictSave;
use manners_repo::{ClientOptions, RepoClient, RepoError};
use manners_testkit::fixtures::{publish, regex_rule, ruleset_path, Published};
use manners_testkit::harness::{embedded_report, findings, subscribe, ProxyHarness};
use manners_testkit::merge::{masked_text, random_annotate_report, random_html, random_redact_report};
use manners_testkit::mock::{MockServer, Route};
use manners_testkit::pattern::{random_re, random_text, scan};
use manners_testkit::selector::{oracle_select, random_selector, random_tree};
use manners_testkit::template::{oracle, random_case, Mutation, CLOSE, OPEN};
use manners_testkit::{rng, Rng, Tally};
use serde_json::{json, Value};

type Criterion<'a> = (u8, &'static str, Box<dyn Fn() -> Verdict + 'a>);

struct Verdict {
    ok: bool,
    detail: String,
}

impl Verdict {
    fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self {
            ok,
            detail: detail.into(),
        }
    }

    fn from_tally(tally: &Tally, extra: &str) -> Self {
        Self::new(tally.passed(), format!("{}{extra}", tally.summary()))
    }
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let criteria: Vec<Criterion> = vec![
        (1, "selector oracle equivalence", Box::new(selector_oracle)),
        (2, "template conformance oracle", Box::new(template_oracle)),
        (3, "regex-filter anchor exactness", Box::new(regex_anchors)),
        (4, "text preservation and idempotence", Box::new(merge_properties)),
        (5, "pass-through fidelity", Box::new(|| block(&rt, pass_through()))),
        (6, "strict-save soundness", Box::new(|| block(&rt, strict_save()))),
        (7, "ruleset integrity", Box::new(|| block(&rt, integrity()))),
        (8, "per-user personalization", Box::new(|| block(&rt, personalization()))),
        (9, "added proxy latency", Box::new(|| block(&rt, latency()))),
        (10, "CLI and proxy report equality", Box::new(|| block(&rt, report_equality()))),
    ];
    let mut failed = 0;
    for (n, name, run) in &criteria {
        let verdict = std::panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Verdict::new(false, format!("panicked: {}", panic_message(&p))));
        if !verdict.ok {
            failed += 1;
        }
        println!(
            "criterion {n}: {} - {name}: {}",
            if verdict.ok { "PASS" } else { "FAIL" },
            verdict.detail
        );
        std::io::stdout().flush().ok();
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn block(rt: &tokio::runtime::Runtime, fut: impl Future<Output = Verdict>) -> Verdict {
    rt.block_on(fut)
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn selector_oracle() -> Verdict {
    let start = Instant::now();
    let mut tally = Tally::default();
    for seed in 0..1000u64 {
        let mut r = rng(seed);
        let tree = random_tree(&mut r, 200, 6);
        let sel = random_selector(&mut r);
        let src = sel.render();
        let got = Selector::parse(&src).map(|p| p.select_nodes(&tree, tree.root()));
        let want = oracle_select(&tree, &sel);
        tally.check(got.as_ref().ok() == Some(&want), || format!("seed {seed} selector {src}"));
    }
    let elapsed = start.elapsed();
    let mut v = Verdict::from_tally(&tally, &format!(" in {:.2}s", elapsed.as_secs_f64()));
    v.ok &= elapsed < Duration::from_secs(60);
    v
}

fn template_oracle() -> Verdict {
    let mut tally = Tally::default();
    let (mut holes, mut literals) = (0, 0);
    for seed in 0..1000u64 {
        let case = random_case(&mut rng(seed));
        let got = Template::parse(&case.source, OPEN, CLOSE)
            .map(|t| t.check(&case.subject).err().map(|d| (d.offset, d.segment)));
        let Ok(got) = got else {
            tally.check(false, || format!("seed {seed}: template did not parse"));
            continue;
        };
        let mutation_ok = match case.kind {
            Mutation::None => got.is_none(),
            Mutation::Hole => {
                holes += 1;
                got.is_none()
            }
            Mutation::Literal => {
                literals += 1;
                got.is_some()
            }
            Mutation::Free => true,
        };
        let agrees = got == oracle(&case.literals, &case.subject);
        tally.check(agrees && mutation_ok, || format!("seed {seed}: {case:?}"));
    }
    Verdict::from_tally(&tally, &format!(" ({holes} hole edits, {literals} literal edits)"))
}

fn regex_anchors() -> Verdict {
    let mut tally = Tally::default();
    let mut anchors = 0;
    for seed in 0..500u64 {
        let mut r = rng(seed);
        let re = random_re(&mut r, 3);
        let texts: Vec<String> = (0..3).map(|_| random_text(&mut r, 24)).collect();
        let mut b = TreeBuilder::new();
        b.open("body", &[]);
        for t in &texts {
            b.open("p", &[]).text(t).close();
        }
        b.close();
        let tree = b.finish("https://example.org/", "", "UTF-8");
        let Ok(params) = RegexFilterParams::new(&re.render(), "m") else {
            tally.check(false, || format!("seed {seed}: pattern {} rejected", re.render()));
            continue;
        };
        let got: Vec<Option<(String, usize, usize)>> = validate_regex_filter(&tree, &[tree.root()], &params)
            .into_iter()
            .map(|f| f.anchor.map(|a| (a.node.to_string(), a.start, a.end)))
            .collect();
        let mut want = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            for (s, e) in scan(&re, t) {
                want.push(Some((format!("/body[1]/p[{}]/text()[1]", i + 1), s, e)));
            }
        }
        anchors += want.len();
        tally.check(got == want, || format!("seed {seed}: pattern {}", re.render()));
    }
    Verdict::from_tally(&tally, &format!(" ({anchors} anchors)"))
}

fn parse(bytes: &[u8]) -> DocTree {
    parse_html(bytes, None, "https://wiki.example.org/Page", &ParseOptions::default()).unwrap()
}

fn merge_properties() -> Verdict {
    let mut tally = Tally::default();
    for seed in 0..1000u64 {
        let mut r = rng(seed);
        let tree = parse(random_html(&mut r).as_bytes());
        let overlay = r.gen_bool(0.5);
        let report = random_annotate_report(&mut r, &tree);
        let once = merge(&tree, &report, overlay);
        let merged = parse(&once.html);
        let preserved = extract_text(&merged) == extract_text(&tree);
        let idempotent = merge(&merged, &report, overlay).html == once.html;

        let redact = random_redact_report(&mut r, &tree, '#');
        let masked = extract_text(&parse(&merge(&tree, &redact, false).html)) == masked_text(&tree, &redact);
        tally.check(preserved && idempotent && masked, || {
            format!("seed {seed}: preserved={preserved} idempotent={idempotent} masked={masked}")
        });
    }
    Verdict::from_tally(&tally, "")
}

fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    gz.write_all(bytes).unwrap();
    gz.finish().unwrap()
}

/// Path, route, and whether the response is eligible HTML.
fn corpus() -> Vec<(&'static str, Route, bool)> {
    let page = "<!DOCTYPE html><html><head><title>t</title></head><body><p>badword here</p></body></html>";
    let big: String = (0..800).map(|i| format!("<p id=p{i}>paragraph {i} with badword &amp; text</p>\n")).collect();
    let latin1: Vec<u8> = b"<html><body><p>caf\xe9 badword</p></body></html>".to_vec();
    let mut bom = vec![0xEF, 0xBB, 0xBF];
    bom.extend_from_slice(page.as_bytes());
    vec![
        ("/plain.html", Route::html(page), true),
        ("/messy.html", Route::html("<p>a &amp; b<br/><div>unclosed <b>bold<i>both</b></i>"), true),
        ("/latin1.html", Route::ok("text/html; charset=iso-8859-1", latin1), true),
        ("/upper.html", Route::ok("text/html", "<HTML><BODY><P CLASS=x>Upper badword</BODY>"), true),
        (
            "/script.html",
            Route::html("<html><head><script>if (a < b) { x = '</p>'; }</script></head><body><!-- badword --><p>x</p></body></html>"),
            true,
        ),
        ("/gzip.html", Route::html(gzip(page.as_bytes())).header("content-encoding", "gzip"), true),
        ("/big.html", Route::html(format!("<!DOCTYPE html><body>{big}</body>")), true),
        ("/bom.html", Route::html(bom), true),
        ("/crlf.html", Route::html("<html>\r\n<body>\r\n<p>badword  \t</p>\r\n</body>\r\n</html>\r\n"), true),
        ("/etag.html", Route::html(page).header("etag", "\"abc\"").header("cache-control", "max-age=60"), true),
        ("/page.xhtml", Route::ok("application/xhtml+xml", page), false),
        ("/style.css", Route::ok("text/css", "p { content: \"badword\" }"), false),
        ("/app.js", Route::ok("text/javascript", "document.write('<p>badword</p>')"), false),
        ("/data.json", Route::json(r#"{"text":"badword"}"#), false),
        ("/img.png", Route::ok("image/png", vec![0x89, b'P', b'N', b'G', 0, 0xFF, 0x10, 0x80]), false),
        ("/font.woff2", Route::ok("font/woff2", (0..=255u8).collect::<Vec<u8>>()), false),
        ("/missing.html", Route::html("<p>not found badword</p>").status(404), false),
        ("/moved", Route::html("<p>moved</p>").status(302).header("location", "/plain.html"), false),
        ("/empty", Route::html("").status(204), false),
        ("/notes.txt", Route::ok("text/plain", "badword in plain text"), false),
    ]
}

async fn pass_through() -> Verdict {
    let rules = vec![Published::new("basics", "1", &[regex_rule("r", "badword", "^ftp:")])];
    let h = ProxyHarness::start(&rules, |c| c.overlay_enabled = false).await;
    let corpus = corpus();
    let mut tally = Tally::default();
    for (path, route, _) in &corpus {
        h.origin.route(path, route.clone());
    }
    for (path, route, eligible) in &corpus {
        let resp = h.get(path, Some("reader")).await;
        let status = resp.status().as_u16();
        let header = findings(&resp);
        let body = resp.bytes().await.unwrap();
        let identical = body.as_ref() == route.body.as_slice() && status == route.status;
        let header_ok = !eligible || header == Some(0);
        tally.check(identical && header_ok, || {
            format!("{path}: identical={identical} findings={header:?}")
        });
    }
    let eligible = corpus.iter().filter(|c| c.2).count();
    Verdict::from_tally(&tally, &format!(" ({eligible} eligible HTML responses)"))
}

fn form(text: &str) -> String {
    url::form_urlencoded::Serializer::new(String::new())
        .append_pair("title", "Page")
        .append_pair("text", text)
        .finish()
}

async fn strict_save() -> Verdict {
    let mut error = regex_rule("no-badword", "badword", ".");
    error["severity"] = json!("error");
    let rules = vec![Published::new("basics", "1", &[error, regex_rule("no-todo", "TODO", ".")])];
    let h = ProxyHarness::start(&rules, |c| {
        c.strict_save = Some(StrictSave {
            endpoint_pattern: "action=submit".into(),
            content_field: "text".into(),
        })
    })
    .await;
    h.origin.route("/wiki", Route::ok("text/plain", "saved"));
    let post = |target: &str, body: String| {
        h.client
            .post(h.url(target))
            .header("content-type", "application/x-www-form-urlencoded")
            .body(body)
            .send()
    };
    let mut problems = Vec::new();

    let blocked = post("/wiki?action=submit", form("a badword <b>here</b>")).await.unwrap();
    let status = blocked.status().as_u16();
    let hits = h.origin.total_hits();
    if status != 422 || hits != 0 {
        problems.push(format!("error content: status {status}, {hits} upstream hits"));
    }

    for (name, target, body) in [
        ("warning-only", "/wiki?action=submit", form("a TODO here")),
        ("non-matching", "/wiki?action=view", form("badword")),
    ] {
        let before = h.origin.total_hits();
        let resp = post(target, body.clone()).await.unwrap();
        let status = resp.status().as_u16();
        let reply = resp.bytes().await.unwrap();
        let forwarded = h.origin.requests().last().map(|r| r.body.clone());
        let ok = status == 200
            && h.origin.total_hits() == before + 1
            && forwarded.as_deref() == Some(body.as_bytes())
            && reply.as_ref() == b"saved";
        if !ok {
            problems.push(format!("{name}: status {status}, forwarded {:?}", forwarded.map(String::from_utf8)));
        }
    }
    if problems.is_empty() {
        Verdict::new(true, "error save blocked with 422 and 0 upstream hits; 2 saves forwarded byte-identical")
    } else {
        Verdict::new(false, problems.join("; "))
    }
}

async fn integrity() -> Verdict {
    let server = MockServer::start();
    let good = Published::new("basics", "1", &[regex_rule("no-badword", "badword", ".")]);
    let repo = publish(&server, "/repo", std::slice::from_ref(&good));
    let registry = Registry::builtin();
    let mut r = rng(7);
    let mut tally = Tally::default();
    for _ in 0..100 {
        let pos = r.gen_range(0..good.bytes.len());
        let mut bad = good.bytes.clone();
        bad[pos] ^= r.gen_range(1..=255u8);
        server.route(&ruleset_path("/repo", &good), Route::json(bad));
        let dir = tempfile::tempdir().unwrap();
        let client = RepoClient::new(ClientOptions {
            timeout: Duration::from_secs(10),
            cache_dir: Some(dir.path().to_path_buf()),
        });
        let synced = client.sync(std::slice::from_ref(&repo), &registry).await;
        let never_active = synced.rulesets.is_empty()
            && synced.diagnostics.iter().any(|d| d.code == "ruleset-integrity");
        let manifest = client.fetch_manifest(&repo).await.unwrap().value;
        let fetched = client.fetch_ruleset(&repo, manifest.entry("basics").unwrap(), &registry).await;
        let rejected = matches!(fetched, Err(RepoError::Integrity { .. }));
        tally.check(never_active && rejected, || format!("flip at byte {pos}"));
    }
    Verdict::from_tally(&tally, " (flipped byte positions)")
}

async fn put_subscription(h: &ProxyHarness, uid: &str, rulesets: &[&str]) -> u16 {
    h.client
        .put(h.url("/_manners/api/subscriptions"))
        .header("cookie", format!("manners_uid={uid}"))
        .body(serde_json::to_vec(&subscribe(&h.repo_url, rulesets)).unwrap())
        .send()
        .await
        .unwrap()
        .status()
        .as_u16()
}

async fn personalization() -> Verdict {
    let rules = vec![
        Published::new("alpha", "1", &[regex_rule("badword", "badword", ".")]),
        Published::new("beta", "1", &[regex_rule("todo", "TODO", ".")]),
    ];
    let h = ProxyHarness::start(&rules, |_| {}).await;
    let page = "<html><body><p>badword TODO</p><p>TODO badword TODO</p></body></html>";
    h.origin.route("/page", Route::html(page));
    let statuses = [
        put_subscription(&h, "alice", &["alpha"]).await,
        put_subscription(&h, "bob", &["beta"]).await,
    ];
    if statuses != [200, 200] {
        return Verdict::new(false, format!("subscription PUT statuses {statuses:?}"));
    }
    let expected = [page.matches("badword").count() as i64, page.matches("TODO").count() as i64];
    h.origin.reset_counts();
    let got = [
        findings(&h.get("/page?x=1", Some("alice")).await),
        findings(&h.get("/page?x=1", Some("bob")).await),
    ];
    let requests = h.origin.requests();
    let canonical: Vec<_> = requests
        .iter()
        .map(|r| {
            let mut headers = r.headers.clone();
            headers.sort();
            (r.method.clone(), r.target.clone(), headers, r.body.clone())
        })
        .collect();
    let identical = canonical.len() == 2 && canonical[0] == canonical[1];
    let counts_ok = got == [Some(expected[0]), Some(expected[1])];
    Verdict::new(
        identical && counts_ok && expected[0] != expected[1],
        format!(
            "findings alice={:?} bob={:?} (expected {} and {}); origin requests identical: {identical}",
            got[0], got[1], expected[0], expected[1]
        ),
    )
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((sorted.len() as f64 - 1.0) * p).round() as usize;
    sorted[idx]
}

async fn latency() -> Verdict {
    let words = [
        "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
    ];
    let rules: Vec<Value> = (0..20)
        .map(|i| {
            let pattern = if i < 10 { format!("\\b{}\\b", words[i]) } else { format!("zz{i}never") };
            regex_rule(&format!("r{i}"), &pattern, ".")
        })
        .collect();
    let published = vec![Published::new("perf", "1", &rules)];
    let h = ProxyHarness::start(&published, |c| c.overlay_enabled = true).await;

    let mut body = String::from("<!DOCTYPE html><html><head><title>perf</title></head><body>\n");
    let mut i = 0;
    while body.len() < 100 * 1024 {
        body.push_str(&format!(
            "<p>Paragraph {i}: {} lorem ipsum dolor sit amet, consectetur adipiscing elit.</p>\n",
            words[i % words.len()]
        ));
        i += 1;
    }
    body.push_str("</body></html>\n");
    let size = body.len();
    h.origin.route("/perf.html", Route::html(body));
    let direct_url = h.origin.url("/perf.html");
    let proxy_url = h.url("/perf.html");
    let client = &h.client;
    let fetch = |url: String| async move {
        let start = Instant::now();
        let resp = client.get(url).header("cookie", "manners_uid=perf").send().await.unwrap();
        let n = findings(&resp);
        resp.bytes().await.unwrap();
        (start.elapsed(), n)
    };
    for _ in 0..20 {
        fetch(proxy_url.clone()).await;
        fetch(direct_url.clone()).await;
    }
    let mut added = Vec::with_capacity(200);
    let mut n_findings = None;
    for _ in 0..200 {
        let (direct, _) = fetch(direct_url.clone()).await;
        let (proxied, n) = fetch(proxy_url.clone()).await;
        n_findings = n;
        added.push((proxied.as_secs_f64() - direct.as_secs_f64()) * 1000.0);
    }
    added.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (p50, p95) = (percentile(&added, 0.50), percentile(&added, 0.95));
    Verdict::new(
        p50 < 50.0 && p95 < 150.0 && n_findings.is_some_and(|n| n > 0),
        format!(
            "{} KiB page, 20 rules, {:?} findings: p50 {p50:.1} ms, p95 {p95:.1} ms over 200 requests",
            size / 1024,
            n_findings
        ),
    )
}

struct Fixture {
    name: &'static str,
    page: &'static str,
    rules: Vec<Value>,
}

fn rule(id: &str, severity: &str, firing: Value, kind: &str, params: Value) -> Value {
    json!({
        "id": id,
        "title": format!("rule {id}"),
        "description": "fixture rule",
        "severity": severity,
        "firing": firing,
        "active": {"kind": kind, "params": params}
    })
}

fn any_url() -> Value {
    json!({"url_pattern": "."})
}

fn fixtures() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "regex-annotate",
            page: "<!DOCTYPE html><html><body><p>teh cat and teh dog</p><p>the end</p></body></html>",
            rules: vec![rule("typo", "warning", any_url(), "regex-filter", json!({"pattern": "\\bteh\\b", "message": "typo", "fix_hint": "the"}))],
        },
        Fixture {
            name: "regex-redact",
            page: "<html><body><p>Card 1234-5678 and 8765-4321.</p></body></html>",
            rules: vec![rule("card", "error", any_url(), "regex-filter", json!({"pattern": "\\d{4}-\\d{4}", "mode": "redact", "mask": "*", "message": "card number"}))],
        },
        Fixture {
            name: "structure-too-many",
            page: "<html><body><h1>One</h1><p>x</p><h1>Two</h1></body></html>",
            rules: vec![rule("one-title", "error", any_url(), "structure", json!({"assertions": [{"selector": "//h1", "min": 1, "max": 1, "message": "exactly one title"}]}))],
        },
        Fixture {
            name: "structure-missing",
            page: "<html><body><table><tr><td>1</td></tr></table></body></html>",
            rules: vec![rule("layout", "warning", json!({"url_pattern": ".", "selector": "//table"}), "structure", json!({"assertions": [
                {"selector": "//h1", "min": 1, "message": "needs a title"},
                {"selector": "//tr", "min": 2, "message": "needs two rows"}
            ]}))],
        },
        Fixture {
            name: "template-divergent",
            page: "<html><body><div id=\"info\">Name: Ada\nYears: 36</div></body></html>",
            rules: vec![rule("infobox", "error", any_url(), "template-conformance", json!({
                "template_source": "Name: {{{name}}}\nAge: {{{age}}}",
                "scope_selector": "//div[@id='info']"
            }))],
        },
        Fixture {
            name: "template-conforming",
            page: "<html><body><div id=\"info\">Name: Ada\nAge: 36</div></body></html>",
            rules: vec![rule("infobox", "error", any_url(), "template-conformance", json!({
                "template_source": {"inline": "Name: [[n]]\nAge: [[a]]"},
                "hole_open": "[[",
                "hole_close": "]]",
                "scope_selector": "//div[@id='info']"
            }))],
        },
        Fixture {
            name: "code-style",
            page: "<html><body><pre>fn main() {\n\tlet x = 1;   \n    let a_rather_long_identifier = x + x + x;\n}</pre></body></html>",
            rules: vec![rule("style", "warning", json!({"url_pattern": ".", "selector": "//pre"}), "code-style", json!({
                "max_line_length": 30, "indent_unit": 4, "forbid_tabs": true, "forbid_trailing_ws": true
            }))],
        },
        Fixture {
            name: "code-syntax",
            page: "<html><body><pre class=\"code\">f(a, [b, c)\n</pre><pre>ok()</pre></body></html>",
            rules: vec![rule("balance", "error", json!({"url_pattern": ".", "selector": "//pre[@class='code']"}), "code-syntax", json!({"checker": "builtin-balance"}))],
        },
        Fixture {
            name: "mixed-kinds",
            page: "<html><body><h1>T</h1><p>TODO fix</p><pre>x = (1 + 2\n</pre><p>FIXME later</p></body></html>",
            rules: vec![
                rule("todo", "info", any_url(), "regex-filter", json!({"pattern": "TODO|FIXME", "message": "open task"})),
                rule("title", "warning", any_url(), "structure", json!({"assertions": [{"selector": "//h2", "min": 1, "message": "needs a section"}]})),
                rule("syntax", "error", json!({"url_pattern": ".", "selector": "//pre"}), "code-syntax", json!({})),
            ],
        },
        Fixture {
            name: "url-filtered",
            page: "<html><body><p>badword once</p></body></html>",
            rules: vec![
                rule("never", "error", json!({"url_pattern": "^ftp:"}), "regex-filter", json!({"pattern": "badword", "message": "never fires"})),
                rule("fx-only", "warning", json!({"url_pattern": "/fx/"}), "regex-filter", json!({"pattern": "once", "message": "fires"})),
            ],
        },
        Fixture {
            name: "no-findings",
            page: "<!DOCTYPE html><html><head><title>clean</title></head><body><p>clean page</p></body></html>",
            rules: vec![rule("clean", "warning", any_url(), "regex-filter", json!({"pattern": "badword", "message": "x"}))],
        },
        Fixture {
            name: "unicode",
            page: "<html><body><p>naïve café — déjà vu; naïve again</p></body></html>",
            rules: vec![rule("naive", "warning", any_url(), "regex-filter", json!({"pattern": "na(ï|i)ve", "message": "spelling"}))],
        },
    ]
}

fn normalized(report: &Value) -> String {
    let mut v = report.clone();
    v["generated_at"] = json!("");
    v["stats"]["duration_ms"] = json!(0);
    serde_json::to_string(&v).unwrap()
}

async fn report_equality() -> Verdict {
    let fixtures = fixtures();
    let published: Vec<Published> = fixtures
        .iter()
        .enumerate()
        .map(|(i, f)| Published::new(&format!("fx{i}"), "1", &f.rules))
        .collect();
    let h = ProxyHarness::start(&published, |c| c.overlay_enabled = true).await;
    let dir = tempfile::tempdir().unwrap();
    let mut tally = Tally::default();
    let mut kinds = std::collections::BTreeSet::new();
    let mut annotations = 0;
    for (i, (f, p)) in fixtures.iter().zip(&published).enumerate() {
        for r in &f.rules {
            kinds.insert(r["active"]["kind"].as_str().unwrap().to_string());
        }
        let path = format!("/fx/{i}");
        h.origin.route(&path, Route::html(f.page));
        let uid = format!("fixture{i}");
        h.engine.store.set(&uid, subscribe(&h.repo_url, &[&p.id])).unwrap();
        let resp = h.get(&path, Some(&uid)).await;
        let proxy_report = embedded_report(&resp.bytes().await.unwrap()).map(|r| serde_json::to_value(r).unwrap());

        let rules_file = dir.path().join(format!("fx{i}.json"));
        let page_file = dir.path().join(format!("fx{i}.html"));
        std::fs::write(&rules_file, &p.bytes).unwrap();
        std::fs::write(&page_file, f.page).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_manners"))
            .arg("check")
            .arg("--rules")
            .arg(&rules_file)
            .args(["--url", &h.origin.url(&path), "--encoding", "utf-8"])
            .arg(&page_file)
            .output()
            .unwrap();
        let cli_report: Option<Value> = serde_json::from_slice(&out.stdout).ok();
        annotations += cli_report.as_ref().and_then(|r| r["annotations"].as_array()).map_or(0, Vec::len);
        let (a, b) = (proxy_report.as_ref().map(normalized), cli_report.as_ref().map(normalized));
        tally.check(a.is_some() && a == b, || format!("{}: proxy {a:?} cli {b:?}", f.name));
    }
    Verdict::from_tally(&tally, &format!(" ({annotations} annotations; validator kinds: {})", kinds.into_iter().collect::<Vec<_>>().join(", ")))
}
