//! HTTP service around the annotation pipeline. Sessions move from
//! annotating (stream pointer samples, finalize shapes) to capturing
//! (propagate shapes through a frame sequence) to closed, and can be
//! exported at any point.

mod app;
pub mod archive;
pub mod capture;
pub mod error;
pub mod session;
pub mod store;

pub use app::{router, AppState, FrameView, SessionSummary};
pub use error::{ApiError, ErrorPayload};

/// Binds `addr` and serves until the task is cancelled.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
