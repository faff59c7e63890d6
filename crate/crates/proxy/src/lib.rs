//! The annotating proxy: forwards requests to the origin, runs each
//! user's subscribed rules over eligible HTML responses, and serves the
//! annotated page. Also answers the management API and overlay assets
//! under `/_manners/`, and optionally blocks form saves that produce
//! error findings.

pub mod api;
pub mod config;
pub mod engine;
pub mod handler;
pub mod http;
pub mod server;
pub mod strict;

pub use config::{ConfigError, Mode, ProxyConfig, StrictSave};
pub use engine::Engine;
pub use handler::Proxy;
pub use http::{DIAGNOSTIC_HEADER, FINDINGS_HEADER, UID_COOKIE};
pub use server::{start, RunningServer, ServeError};
