//! `manners`: check or annotate pages offline, refresh the rule cache,
//! and run the proxy.
//!
//! Exit status: 0 when no error-severity finding was produced, 1 when at
//! least one was, 2 on usage, configuration or parse failures. Machine
//! output goes to stdout only; diagnostics go to stderr.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use manners_core::rules::candidates;
use manners_core::validators::{external::DEFAULT_MAX_CONCURRENT, CheckerPool, CheckerSpec, Services};
use manners_core::{
    annotate, parse_ruleset, Merged, PipelineEnv, Registry, RuleSet, RuleSetKey, Subscription, SubscriptionEntry,
};
use manners_proxy::{Engine, ProxyConfig};
use manners_repo::{ClientOptions, RepoClient, SubscriptionStore};

#[derive(Parser)]
#[command(name = "manners", version, about = "Rule-based page annotation: offline checks and the annotating proxy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a page and print the JSON report.
    Check(PageArgs),
    /// Print the annotated page.
    Annotate {
        #[command(flatten)]
        page: PageArgs,
        /// Also write the JSON report to stderr.
        #[arg(long)]
        report: bool,
        /// Inject the overlay assets and the embedded report.
        #[arg(long)]
        overlay: bool,
    },
    /// Rule repository maintenance.
    Repo {
        #[command(subcommand)]
        command: RepoCommand,
    },
    /// Run the proxy.
    Serve {
        /// Config file; defaults to $MANNERS_CONFIG.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum RepoCommand {
    /// Fetch manifests and rulesets into the cache and print a summary.
    Sync {
        #[arg(required = true)]
        repo_urls: Vec<String>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PageArgs {
    /// Ruleset file or http(s) URL; repeatable.
    #[arg(long = "rules", required = true)]
    rules: Vec<String>,
    /// URL the page is assumed to come from; defaults to file:///<path>.
    #[arg(long)]
    url: Option<String>,
    /// Character encoding of the page when it does not declare one.
    #[arg(long)]
    encoding: Option<String>,
    /// Allow an external checker: ID=PROGRAM; repeatable.
    #[arg(long = "checker", value_name = "ID=PROGRAM")]
    checkers: Vec<String>,
    /// Page file, or `-` for stdin.
    page: String,
}

/// An error that maps to exit status 2.
struct Usage(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("cannot start async runtime")
}

fn run(cli: Cli) -> Result<u8, Usage> {
    match cli.command {
        Command::Check(page) => {
            let merged = check_page(&page, false)?;
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &merged.report).context("writing report")?;
            writeln!(out).context("writing report")?;
            Ok(exit_status(&merged))
        }
        Command::Annotate { page, report, overlay } => {
            let merged = check_page(&page, overlay)?;
            std::io::stdout().lock().write_all(&merged.html).context("writing page")?;
            if report {
                eprintln!("{}", serde_json::to_string_pretty(&merged.report).context("serializing report")?);
            }
            Ok(exit_status(&merged))
        }
        Command::Repo {
            command: RepoCommand::Sync { repo_urls, cache_dir },
        } => repo_sync(repo_urls, cache_dir),
        Command::Serve { config } => serve(config.as_deref()),
    }
}

fn exit_status(merged: &Merged) -> u8 {
    u8::from(merged.report.has_errors())
}

fn read_page(page: &str) -> Result<(Vec<u8>, String)> {
    if page == "-" {
        let mut body = Vec::new();
        std::io::stdin().read_to_end(&mut body).context("reading stdin")?;
        return Ok((body, "file:///dev/stdin".into()));
    }
    let body = std::fs::read(page).with_context(|| format!("reading {page}"))?;
    let abs = std::env::current_dir().context("resolving working directory")?.join(page);
    let url = url_for(&abs)?;
    Ok((body, url))
}

fn url_for(path: &Path) -> Result<String> {
    url::Url::from_file_path(path)
        .map(String::from)
        .map_err(|_| anyhow!("cannot turn {} into a file URL", path.display()))
}

fn parse_checkers(specs: &[String]) -> Result<BTreeMap<String, CheckerSpec>> {
    specs
        .iter()
        .map(|s| {
            let (id, program) = s
                .split_once('=')
                .filter(|(id, p)| !id.is_empty() && !p.is_empty())
                .ok_or_else(|| anyhow!("--checker expects ID=PROGRAM, got `{s}`"))?;
            Ok((id.to_string(), CheckerSpec::new(program)))
        })
        .collect()
}

fn is_remote(source: &str) -> bool {
    source.starts_with("http://") || source.starts_with("https://")
}

/// Loads each `--rules` source, keyed by the source string.
async fn load_rules(
    sources: &[String],
    registry: &Registry,
    client: &RepoClient,
) -> Result<BTreeMap<RuleSetKey, Arc<RuleSet>>> {
    let mut loaded = BTreeMap::new();
    for source in sources {
        let bytes = if is_remote(source) {
            client.fetch_bytes(source).await?
        } else {
            std::fs::read(source).with_context(|| format!("reading {source}"))?
        };
        let rs = parse_ruleset(&bytes, registry).with_context(|| format!("loading rules from {source}"))?;
        loaded.insert(RuleSetKey::new(source, &rs.id), Arc::new(rs));
    }
    Ok(loaded)
}

fn check_page(args: &PageArgs, overlay: bool) -> Result<Merged, Usage> {
    let checkers = parse_checkers(&args.checkers)?;
    let registry = Registry::builtin().with_checkers(checkers.keys().cloned());
    let client = RepoClient::new(ClientOptions {
        timeout: Duration::from_secs(30),
        cache_dir: None,
    });
    let rt = runtime()?;
    let (loaded, templates) = rt.block_on(async {
        let loaded = load_rules(&args.rules, &registry, &client).await?;
        let mut diagnostics = Vec::new();
        let urls = loaded.values().flat_map(|rs| rs.template_urls());
        let templates = client.fetch_templates(urls, &mut diagnostics).await;
        for d in diagnostics {
            log::warn!("{d}");
        }
        anyhow::Ok((loaded, templates))
    })?;
    let (body, default_url) = read_page(&args.page)?;
    let url = args.url.clone().unwrap_or(default_url);

    let subscription = Subscription {
        user_id: String::new(),
        entries: loaded
            .keys()
            .map(|k| SubscriptionEntry::new(&k.repo_url, &k.ruleset_id))
            .collect(),
    };
    let (cands, _) = candidates(&subscription, &loaded);
    let env = PipelineEnv {
        registry,
        services: Services {
            templates,
            checkers: CheckerPool::new(checkers, DEFAULT_MAX_CONCURRENT),
        },
        parse: Default::default(),
    };
    let merged = annotate(&url, &body, args.encoding.as_deref(), &cands, &env, overlay)
        .with_context(|| format!("checking {}", args.page))?;
    for d in &merged.report.diagnostics {
        log::warn!("{d}");
    }
    Ok(merged)
}

fn repo_sync(repo_urls: Vec<String>, cache_dir: Option<PathBuf>) -> Result<u8, Usage> {
    let client = RepoClient::new(ClientOptions {
        timeout: Duration::from_secs(30),
        cache_dir,
    });
    let synced = runtime()?.block_on(client.sync(&repo_urls, &Registry::builtin()));
    for d in &synced.diagnostics {
        eprintln!("{d}");
    }
    let rulesets: Vec<_> = synced
        .rulesets
        .iter()
        .map(|(k, rs)| {
            serde_json::json!({"repo_url": k.repo_url, "ruleset_id": k.ruleset_id, "version": rs.version, "rules": rs.rules.len()})
        })
        .collect();
    let summary = serde_json::json!({"rulesets": rulesets, "diagnostics": synced.diagnostics});
    println!("{}", serde_json::to_string_pretty(&summary).context("serializing summary")?);
    let failed = synced.diagnostics.iter().any(|d| d.code != "repo-stale");
    Ok(if failed { 2 } else { 0 })
}

fn serve(config: Option<&Path>) -> Result<u8, Usage> {
    let config = ProxyConfig::load(config)?;
    let store = match &config.subscriptions_path {
        Some(p) => SubscriptionStore::open(p, config.default_subscription.clone())?,
        None => SubscriptionStore::in_memory(config.default_subscription.clone()),
    };
    let rt = runtime()?;
    rt.block_on(async {
        let engine = Engine::new(config, store);
        engine.sync().await;
        let server = manners_proxy::start(engine).await?;
        log::info!("listening on {}", server.local_addr());
        eprintln!("manners proxy listening on {}", server.local_addr());
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = server.wait() => bail!("server stopped unexpectedly"),
        }
        Ok(())
    })?;
    Ok(0)
}
