//! JSON-over-HTTP front end for the case-based reasoning engine.
//!
//! Endpoints mirror the workbench panels: case-base browsing, a session
//! resource driven through query / choose / revise / retain, and formative
//! evaluation (`predict`, `evaluate`). Errors are returned as
//! `{"code", "message", "detail"?}` with a matching HTTP status.

mod error;
mod routes;
mod state;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cbr_core::CaseBaseStore;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use error::{ApiError, ErrorCode};
pub use routes::{router, SessionView};
pub use state::AppState;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub addr: SocketAddr,
    pub session_timeout: Duration,
    pub default_k: usize,
    pub bearer_token: Option<String>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            session_timeout: Duration::from_secs(30 * 60),
            default_k: cbr_core::DEFAULT_K,
            bearer_token: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("data directory: {0}")]
    DataDir(#[source] cbr_core::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("default k must be at least 1")]
    ZeroK,
    #[error("server failed: {0}")]
    Server(#[source] std::io::Error),
    #[error("flushing sessions on shutdown: {0}")]
    Flush(String),
}

/// A running service. Dropping the handle leaves the server running; call
/// [`ServiceHandle::shutdown`] to stop it and flush open sessions.
#[derive(Debug)]
pub struct ServiceHandle {
    addr: SocketAddr,
    state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    server: JoinHandle<std::io::Result<()>>,
    sweeper: JoinHandle<()>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }

    /// Stops accepting requests, waits for in-flight ones, then closes every
    /// open session so retained cases reach disk.
    pub async fn shutdown(mut self) -> Result<(), ServiceError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.sweeper.abort();
        let served = (&mut self.server).await;
        let errors = self.state.close_all_sessions().await;
        if let Ok(Err(e)) = served {
            return Err(ServiceError::Server(e));
        }
        if !errors.is_empty() {
            let msgs: Vec<String> = errors.iter().map(ToString::to_string).collect();
            return Err(ServiceError::Flush(msgs.join("; ")));
        }
        Ok(())
    }
}

pub fn build_state(config: &ServiceConfig) -> Result<Arc<AppState>, ServiceError> {
    if config.default_k == 0 {
        return Err(ServiceError::ZeroK);
    }
    let store = CaseBaseStore::open(&config.data_dir).map_err(ServiceError::DataDir)?;
    Ok(Arc::new(
        AppState::new(Arc::new(store), config.default_k, config.session_timeout)
            .with_bearer_token(config.bearer_token.clone()),
    ))
}

pub async fn serve(config: ServiceConfig) -> Result<ServiceHandle, ServiceError> {
    let state = build_state(&config)?;
    let listener = TcpListener::bind(config.addr)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.addr,
            source,
        })?;
    let addr = listener.local_addr().map_err(ServiceError::Server)?;
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let app = router(state.clone());
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop_rx.await;
            })
            .await
    });

    let sweep_state = state.clone();
    let period = (config.session_timeout / 4).clamp(Duration::from_millis(10), Duration::from_secs(30));
    let sweeper = tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let closed = sweep_state.sweep_idle(Instant::now());
            if closed > 0 {
                tracing::info!(closed, "expired idle sessions");
            }
        }
    });

    tracing::info!(%addr, "listening");
    Ok(ServiceHandle {
        addr,
        state,
        stop: Some(stop_tx),
        server,
        sweeper,
    })
}

/// Runs until Ctrl-C (or SIGTERM on Unix), then shuts down gracefully.
pub async fn serve_until_signal(config: ServiceConfig) -> Result<(), ServiceError> {
    let handle = serve(config).await?;
    shutdown_signal().await;
    tracing::info!("shutting down");
    handle.shutdown().await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
}
