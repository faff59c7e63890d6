//! Proxy configuration, read from a TOML file.
//!
//! ```toml
//! listen_address = "127.0.0.1:8080"
//! mode = "reverse"                      # or "forward"
//! upstream = "https://wiki.example.org" # required in reverse mode
//! repos = ["https://rules.example.org/basics"]
//! overlay_enabled = true
//! eligible_content_types = ["text/html"]
//! max_body_bytes = 4194304
//! cache_dir = "/var/cache/manners"
//! subscriptions_path = "/var/lib/manners/subscriptions.json"
//! ui_dir = "/usr/share/manners/ui"      # overrides the built-in assets
//! sync_interval_secs = 300
//!
//! [timeouts]
//! upstream_ms = 30000
//! repo_ms = 10000
//!
//! [default_subscription]
//! entries = [{ repo_url = "https://rules.example.org/basics", ruleset_id = "wiki-basics" }]
//!
//! [strict_save]
//! endpoint_pattern = "action=submit"
//! content_field = "wpTextbox1"
//!
//! [checker_allowlist]
//! pyflakes = "/usr/bin/pyflakes"
//! rustfmt = { program = "/usr/bin/rustfmt", args = ["--check"] }
//!
//! [tls]
//! cert_path = "cert.pem"
//! key_path = "key.pem"
//! ```
//!
//! `MANNERS_CONFIG` names the file when no path is given; `MANNERS_LISTEN`
//! overrides `listen_address`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use manners_core::validators::CheckerSpec;
use manners_core::Subscription;
use regex::Regex;
use serde::Deserialize;
use url::Url;

pub const ENV_CONFIG: &str = "MANNERS_CONFIG";
pub const ENV_LISTEN: &str = "MANNERS_LISTEN";
pub const DEFAULT_MAX_BODY_BYTES: usize = 4 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config: `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("no config file given and {ENV_CONFIG} is not set")]
    Missing,
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Forward,
    #[default]
    Reverse,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrictSave {
    /// Searched (unanchored) in the full request URL.
    pub endpoint_pattern: String,
    pub content_field: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CheckerEntry {
    Program(PathBuf),
    Full {
        program: PathBuf,
        #[serde(default)]
        args: Vec<String>,
    },
}

impl CheckerEntry {
    pub fn spec(&self) -> CheckerSpec {
        match self {
            CheckerEntry::Program(p) => CheckerSpec::new(p),
            CheckerEntry::Full { program, args } => CheckerSpec {
                program: program.clone(),
                args: args.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timeouts {
    pub upstream_ms: u64,
    pub repo_ms: u64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self {
            upstream_ms: 30_000,
            repo_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsConfig {
    pub cert_path: PathBuf,
    pub key_path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxyConfig {
    pub listen_address: SocketAddr,
    pub mode: Mode,
    pub upstream: Option<String>,
    pub repos: Vec<String>,
    pub default_subscription: Subscription,
    pub eligible_content_types: Vec<String>,
    pub overlay_enabled: bool,
    pub strict_save: Option<StrictSave>,
    pub checker_allowlist: BTreeMap<String, CheckerEntry>,
    pub max_body_bytes: usize,
    pub timeouts: Timeouts,
    pub cache_dir: Option<PathBuf>,
    pub subscriptions_path: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    /// Zero disables periodic repository refresh.
    pub sync_interval_secs: u64,
    pub tls: Option<TlsConfig>,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            listen_address: SocketAddr::from(([127, 0, 0, 1], 8080)),
            mode: Mode::Reverse,
            upstream: None,
            repos: Vec::new(),
            default_subscription: Subscription::default(),
            eligible_content_types: vec!["text/html".into()],
            overlay_enabled: true,
            strict_save: None,
            checker_allowlist: BTreeMap::new(),
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            timeouts: Timeouts::default(),
            cache_dir: None,
            subscriptions_path: None,
            ui_dir: None,
            sync_interval_secs: 300,
            tls: None,
        }
    }
}

impl ProxyConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let mut config: ProxyConfig = toml::from_str(text)?;
        for t in &mut config.eligible_content_types {
            *t = t.trim().to_ascii_lowercase();
        }
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`, or the file named by `MANNERS_CONFIG`, then applies
    /// `MANNERS_LISTEN`.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None => std::env::var_os(ENV_CONFIG).map(PathBuf::from).ok_or(ConfigError::Missing)?,
        };
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Read {
            path: path.clone(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        if let Some(listen) = std::env::var(ENV_LISTEN).ok().filter(|s| !s.is_empty()) {
            config.apply_listen_override(&listen)?;
        }
        Ok(config)
    }

    pub fn apply_listen_override(&mut self, listen: &str) -> Result<(), ConfigError> {
        self.listen_address = listen
            .parse()
            .map_err(|e| invalid(ENV_LISTEN, format!("`{listen}` is not a socket address: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.mode == Mode::Reverse {
            let upstream = self
                .upstream
                .as_deref()
                .ok_or_else(|| invalid("upstream", "reverse mode requires an upstream origin"))?;
            let url = Url::parse(upstream).map_err(|e| invalid("upstream", e.to_string()))?;
            if !matches!(url.scheme(), "http" | "https") || url.host().is_none() {
                return Err(invalid("upstream", "must be an absolute http or https URL"));
            }
        }
        if self.max_body_bytes == 0 {
            return Err(invalid("max_body_bytes", "must be greater than zero"));
        }
        if let Some(s) = &self.strict_save {
            if s.endpoint_pattern.is_empty() {
                return Err(invalid("strict_save.endpoint_pattern", "must not be empty"));
            }
            Regex::new(&s.endpoint_pattern).map_err(|e| invalid("strict_save.endpoint_pattern", e.to_string()))?;
            if s.content_field.is_empty() {
                return Err(invalid("strict_save.content_field", "must not be empty"));
            }
        }
        for repo in &self.repos {
            Url::parse(repo).map_err(|e| invalid("repos", format!("`{repo}`: {e}")))?;
        }
        self.default_subscription
            .validate()
            .map_err(|e| invalid("default_subscription", e.to_string()))?;
        Ok(())
    }

    pub fn upstream_timeout(&self) -> Duration {
        Duration::from_millis(self.timeouts.upstream_ms)
    }

    pub fn repo_timeout(&self) -> Duration {
        Duration::from_millis(self.timeouts.repo_ms)
    }

    pub fn checker_specs(&self) -> BTreeMap<String, CheckerSpec> {
        self.checker_allowlist.iter().map(|(k, v)| (k.clone(), v.spec())).collect()
    }

    /// Whether `content_type` (a full header value) names an eligible media type.
    pub fn is_eligible_type(&self, content_type: &str) -> bool {
        let media = content_type.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
        self.eligible_content_types.contains(&media)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_reverse_config() {
        let c = ProxyConfig::from_toml("upstream = \"http://origin.test\"").unwrap();
        assert_eq!(c.mode, Mode::Reverse);
        assert_eq!(c.max_body_bytes, DEFAULT_MAX_BODY_BYTES);
        assert!(c.is_eligible_type("text/html; charset=UTF-8"));
        assert!(c.is_eligible_type("TEXT/HTML"));
        assert!(!c.is_eligible_type("text/css"));
    }

    #[test]
    fn reverse_requires_upstream() {
        assert!(matches!(ProxyConfig::from_toml(""), Err(ConfigError::Invalid { field, .. }) if field == "upstream"));
        assert!(ProxyConfig::from_toml("mode = \"forward\"").is_ok());
    }

    #[test]
    fn strict_save_requires_both_fields() {
        let err = ProxyConfig::from_toml("mode = \"forward\"\n[strict_save]\nendpoint_pattern = \"save\"").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax(_)));
        let err = ProxyConfig::from_toml("mode = \"forward\"\n[strict_save]\nendpoint_pattern = \"\"\ncontent_field = \"x\"")
            .unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { .. }));
    }

    #[test]
    fn size_limit_must_be_positive() {
        assert!(ProxyConfig::from_toml("mode = \"forward\"\nmax_body_bytes = 0").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ProxyConfig::from_toml("mode = \"forward\"\nlisten = \"x\"").is_err());
    }

    #[test]
    fn checker_entries() {
        let c = ProxyConfig::from_toml(
            "mode = \"forward\"\n[checker_allowlist]\na = \"/bin/a\"\nb = { program = \"/bin/b\", args = [\"-q\"] }",
        )
        .unwrap();
        let specs = c.checker_specs();
        assert_eq!(specs["a"].program, PathBuf::from("/bin/a"));
        assert_eq!(specs["b"].args, ["-q"]);
    }

    #[test]
    fn listen_override() {
        let mut c = ProxyConfig::from_toml("mode = \"forward\"").unwrap();
        c.apply_listen_override("0.0.0.0:9999").unwrap();
        assert_eq!(c.listen_address.port(), 9999);
        assert!(c.apply_listen_override("nope").is_err());
    }
}
