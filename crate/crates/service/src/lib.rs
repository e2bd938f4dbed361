//! Authenticated `/v1` HTTP API over the mapping, suggestion, document and
//! edit pipeline.

pub mod api;
pub mod auth;
pub mod edit;
pub mod error;
pub mod state;

pub use api::router;
pub use auth::{TokenError, TokenPayload, TokenSigner};
pub use error::{ApiError, ErrorBody};
pub use state::{AppState, DocumentStatus, ServiceConfig, StateError};

/// Binds `addr` and serves until the task is dropped.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(std::sync::Arc::new(state))).await
}

/// Serves on an already bound listener, keeping `state` shared with the caller.
pub async fn serve_listener(listener: std::net::TcpListener, state: std::sync::Arc<AppState>) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    let listener = tokio::net::TcpListener::from_std(listener)?;
    axum::serve(listener, router(state)).await
}
