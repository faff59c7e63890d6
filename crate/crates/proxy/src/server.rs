//! Accept loop, optional TLS termination and periodic repository sync.

use std::io;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use hyper::server::conn::http1;
use hyper::service::service_fn;
use hyper_util::rt::TokioIo;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinSet;
use tokio_rustls::rustls::pki_types::pem::PemObject;
use tokio_rustls::rustls::pki_types::{CertificateDer, PrivateKeyDer};
use tokio_rustls::rustls::ServerConfig;
use tokio_rustls::TlsAcceptor;

use crate::config::TlsConfig;
use crate::engine::Engine;
use crate::handler::Proxy;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("TLS setup failed: {0}")]
    Tls(String),
}

fn tls_acceptor(tls: &TlsConfig) -> Result<TlsAcceptor, ServeError> {
    let read_err = |p: &Path, e: &dyn std::fmt::Display| ServeError::Tls(format!("{}: {e}", p.display()));
    let certs = CertificateDer::pem_file_iter(&tls.cert_path)
        .and_then(|it| it.collect::<Result<Vec<_>, _>>())
        .map_err(|e| read_err(&tls.cert_path, &e))?;
    if certs.is_empty() {
        return Err(ServeError::Tls(format!("{}: no certificates", tls.cert_path.display())));
    }
    let key = PrivateKeyDer::from_pem_file(&tls.key_path).map_err(|e| read_err(&tls.key_path, &e))?;
    let config = ServerConfig::builder_with_provider(Arc::new(tokio_rustls::rustls::crypto::ring::default_provider()))
        .with_safe_default_protocol_versions()
        .and_then(|b| b.with_no_client_auth().with_single_cert(certs, key))
        .map_err(|e| ServeError::Tls(e.to_string()))?;
    Ok(TlsAcceptor::from(Arc::new(config)))
}

/// A running proxy; dropping it stops the server.
pub struct RunningServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<()>>,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://ADDR` (or `https://`) followed by `path`.
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    /// Stops accepting and closes open connections.
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    /// Runs until the server task ends.
    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Binds `engine.config.listen_address` and serves in the background.
/// Must be called inside a Tokio runtime.
pub async fn start(engine: Arc<Engine>) -> Result<RunningServer, ServeError> {
    let addr = engine.config.listen_address;
    let acceptor = engine.config.tls.as_ref().map(tls_acceptor).transpose()?;
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| ServeError::Bind { addr, source })?;
    let (tx, mut rx) = oneshot::channel();
    let proxy = Arc::new(Proxy::new(Arc::clone(&engine)));
    let interval = engine.config.sync_interval_secs;

    let task = tokio::spawn(async move {
        let mut conns = JoinSet::new();
        if interval > 0 {
            let engine = Arc::clone(&engine);
            conns.spawn(async move {
                let mut tick = tokio::time::interval(Duration::from_secs(interval));
                tick.tick().await;
                loop {
                    tick.tick().await;
                    engine.sync().await;
                }
            });
        }
        loop {
            tokio::select! {
                _ = &mut rx => break,
                accepted = listener.accept() => {
                    let (stream, peer) = match accepted {
                        Ok(a) => a,
                        Err(e) => {
                            log::warn!("accept failed: {e}");
                            continue;
                        }
                    };
                    let _ = stream.set_nodelay(true);
                    let proxy = Arc::clone(&proxy);
                    let acceptor = acceptor.clone();
                    conns.spawn(async move {
                        let svc = service_fn(move |req| {
                            let proxy = Arc::clone(&proxy);
                            async move { Ok::<_, std::convert::Infallible>(proxy.handle(req).await) }
                        });
                        let result = match acceptor {
                            Some(acceptor) => match acceptor.accept(stream).await {
                                Ok(tls) => http1::Builder::new().serve_connection(TokioIo::new(tls), svc).await,
                                Err(e) => {
                                    log::debug!("TLS handshake with {peer} failed: {e}");
                                    return;
                                }
                            },
                            None => http1::Builder::new().serve_connection(TokioIo::new(stream), svc).await,
                        };
                        if let Err(e) = result {
                            log::debug!("connection from {peer}: {e}");
                        }
                    });
                }
                Some(_) = conns.join_next(), if !conns.is_empty() => {}
            }
        }
        conns.shutdown().await;
    });
    Ok(RunningServer {
        addr,
        shutdown: Some(tx),
        task: Some(task),
    })
}
