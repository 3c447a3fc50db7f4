//! Read-only HTTP service for one precomputed analysis bundle.

use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::http::header;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::{Json, Router};
use tower_http::compression::CompressionLayer;
use tower_http::services::ServeDir;

const PLACEHOLDER_INDEX: &str = r#"<!DOCTYPE html>
<html lang="en">
<head><meta charset="utf-8"><title>loopx</title></head>
<body>
<h1>loopx</h1>
<p>The explorer UI is not installed. Set <code>LOOPX_UI_DIR</code> to its build directory and restart.</p>
<p>The analysis bundle is available at <a href="/api/bundle">/api/bundle</a>.</p>
</body>
</html>
"#;

/// Routes for `bundle_json`, with static files from `ui_dir` when given.
pub fn router(bundle_json: Vec<u8>, ui_dir: Option<PathBuf>) -> Router {
    let bundle = Bytes::from(bundle_json);
    let api = Router::new()
        .route("/api/health", get(|| async { Json(serde_json::json!({ "status": "ok" })) }))
        .route(
            "/api/bundle",
            get(move || {
                let body = bundle.clone();
                async move { ([(header::CONTENT_TYPE, "application/json")], body).into_response() }
            }),
        );
    let app = match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    };
    app.layer(CompressionLayer::new())
}

/// Serves until interrupted.
pub async fn serve(host: &str, port: u16, bundle_json: Vec<u8>, ui_dir: Option<PathBuf>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port))
        .await
        .with_context(|| format!("binding {host}:{port}"))?;
    let addr: SocketAddr = listener.local_addr()?;
    eprintln!("listening on http://{addr}");
    axum::serve(listener, router(bundle_json, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .context("serving")
}
