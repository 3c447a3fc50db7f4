use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Command, Stdio};

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use flate2::read::GzDecoder;
use tower::ServiceExt;

use loopx_cli::server::router;
use loopx_core::export::{AnalysisBundle, BundleOptions};
use loopx_core::loops::DEFAULT_LOOP_CAP;
use loopx_core::model::parse_xmile;

const BASS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models/bass.xmile");

fn bass_json() -> Vec<u8> {
    let model = parse_xmile(&std::fs::read_to_string(BASS).unwrap()).unwrap();
    let analysis = loopx_core::analyze(model, DEFAULT_LOOP_CAP).unwrap();
    AnalysisBundle::build(&analysis, &BundleOptions::default())
        .unwrap()
        .to_json()
        .unwrap()
        .into_bytes()
}

async fn send(app: Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let res = app.oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec();
    (status, headers, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

#[tokio::test]
async fn health() {
    let (status, _, body) = send(router(b"{}".to_vec(), None), get("/api/health")).await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v, serde_json::json!({ "status": "ok" }));
}

#[tokio::test]
async fn bundle_is_json_and_gzipped_on_request() {
    let app = router(bass_json(), None);
    let (status, headers, body) = send(app.clone(), get("/api/bundle")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "application/json");
    let bundle = AnalysisBundle::from_json(std::str::from_utf8(&body).unwrap()).unwrap();
    assert_eq!(bundle.loops.len(), 2);

    let req = Request::get("/api/bundle")
        .header(header::ACCEPT_ENCODING, "gzip")
        .body(Body::empty())
        .unwrap();
    let (status, headers, zipped) = send(app, req).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_ENCODING], "gzip");
    assert!(zipped.len() < body.len());
    let mut plain = Vec::new();
    GzDecoder::new(zipped.as_slice()).read_to_end(&mut plain).unwrap();
    assert_eq!(plain, body);
}

#[tokio::test]
async fn writes_are_rejected() {
    let req = Request::post("/api/bundle").body(Body::empty()).unwrap();
    let (status, _, _) = send(router(b"{}".to_vec(), None), req).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
}

#[tokio::test]
async fn unknown_paths_are_not_found() {
    let (status, _, _) = send(router(b"{}".to_vec(), None), get("/api/nope")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn root_serves_placeholder_or_ui_dir() {
    let (status, _, body) = send(router(b"{}".to_vec(), None), get("/")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("/api/bundle"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>explorer</p>").unwrap();
    std::fs::write(dir.path().join("app.js"), "console.log(1)").unwrap();
    let app = router(b"{}".to_vec(), Some(dir.path().to_path_buf()));
    let (_, _, body) = send(app.clone(), get("/")).await;
    assert_eq!(body, b"<p>explorer</p>");
    let (status, _, body) = send(app.clone(), get("/app.js")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"console.log(1)");
    let (status, _, _) = send(app.clone(), get("/missing.css")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = send(app, get("/api/health")).await;
    assert_eq!(status, StatusCode::OK);
}

#[test]
fn serves_over_tcp() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_loopx"))
        .args(["serve", BASS, "--port", "0"])
        .env_remove("LOOPX_UI_DIR")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    let addr = loop {
        line.clear();
        assert!(stderr.read_line(&mut line).unwrap() > 0, "server exited early");
        if let Some(rest) = line.trim().strip_prefix("listening on http://") {
            break rest.to_string();
        }
    };
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /api/health HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.ends_with(r#"{"status":"ok"}"#), "{response}");
}
