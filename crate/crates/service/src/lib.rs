//! HTTP service for live training sessions.
//!
//! Sessions live in memory behind per-session locks and are persisted as
//! append-only event logs, one `<id>.events.jsonl` per session. Opening a
//! data directory replays every log, so a restarted service carries on
//! where it stopped. Solved fronts are cached in memory and under
//! `fronts/` for reports.
//!
//! ```no_run
//! # async fn run() -> Result<(), valence_service::ServeError> {
//! let config = valence_service::ServeConfig {
//!     port: 8080,
//!     data_dir: "./sessions".into(),
//! };
//! valence_service::serve(config).await
//! # }
//! ```

mod api;
mod error;
pub mod events;
mod manager;
mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::{parse_weights, router};
pub use error::ApiError;
pub use manager::{
    now, ActionRequest, CreateSession, FrontSummary, ScenarioSummary, SessionManager, Skipped, VariableSummary,
};
pub use session::{ActionResponse, SessionConfig, SessionView, Status, StepView, VariableView, MAX_HORIZON};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/service.md")]
mod book_service {}

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_DATA_DIR: &str = "./sessions";

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub port: u16,
    pub data_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot open data directory {path}: {source}")]
    DataDir { path: PathBuf, source: std::io::Error },
    #[error("cannot listen on port {port}: {source}")]
    Bind { port: u16, source: std::io::Error },
    #[error("server failed: {0}")]
    Serve(std::io::Error),
}

/// Serves the API until interrupted. Every write is flushed before its
/// response goes out, so shutdown has nothing left to save.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let dir = config.data_dir.clone();
    let manager = tokio::task::spawn_blocking(move || SessionManager::open(dir))
        .await
        .expect("recovery does not panic")
        .map_err(|source| ServeError::DataDir {
            path: config.data_dir.clone(),
            source,
        })?;
    for s in manager.skipped() {
        tracing::warn!("could not recover {}: {}", s.path.display(), s.reason);
    }
    let recovered = manager.session_ids().len();
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind {
            port: config.port,
            source,
        })?;
    let local = listener.local_addr().map_err(ServeError::Serve)?;
    tracing::info!(
        "serving on http://{local} (data dir {}, {recovered} sessions recovered)",
        config.data_dir.display()
    );
    axum::serve(listener, router(Arc::new(manager)))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(ServeError::Serve)?;
    tracing::info!("shut down");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
}
