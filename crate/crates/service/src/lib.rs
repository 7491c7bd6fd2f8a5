//! Review service: HTTP/JSON access to a subject workspace for interactive
//! threshold and crop steering, landmark inspection and group analyses.

pub mod api;
pub mod error;
pub mod workspace;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

pub use api::router;
pub use error::ApiError;
pub use workspace::{ReviewStatus, SubjectParams, SubjectRecord, Workspace};

pub const DEFAULT_PORT: u16 = 8377;

/// Serve a workspace on localhost until the process is stopped.
pub async fn serve(root: &Path, port: u16) -> std::io::Result<()> {
    let ws = Workspace::open(root).map_err(std::io::Error::other)?;
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving {} on http://{addr}", root.display());
    axum::serve(listener, router(Arc::new(ws))).await
}
