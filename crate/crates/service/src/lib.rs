//! HTTP front end for the workbench. Each session walks one frame through
//! localization, classification, planning and execution; the snapshot is
//! written to disk after every change.

mod app;
pub mod config;
pub mod error;
mod events;
pub mod session;
pub mod store;

use thiserror::Error;

pub use app::{router, AppState};
pub use config::{ConfigError, ServiceConfig};
pub use error::ApiError;
pub use session::{Phase, PlanRecord, Session, SessionError, Source, StepOutcome};
pub use store::{Store, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("listen on {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        source: std::io::Error,
    },
    #[error("server: {0}")]
    Serve(std::io::Error),
}

/// Serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::from_config(&config)?;
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.listen,
            source,
        })?;
    log::info!(
        "listening on {} (data in {})",
        config.listen,
        config.data_dir.display()
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServiceError::Serve)
}
