mod support;

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::Engine;
use code_dojo::service::{router, SubmissionStatus, SubmitRequest, MAX_SOURCE_BYTES};
use http_body_util::BodyExt;
use proptest::prelude::*;
use serde_json::{json, Value};
use support::open;
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn challenge_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(open(dir.path()), None);
    let (status, list) = call(&app, "GET", "/api/challenges", None).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["complex-factory", "sorting-tsc", "toctou-race"]);

    let (status, c) = call(&app, "GET", "/api/challenges/sorting-tsc", None).await;
    assert_eq!(status, StatusCode::OK);
    let on_disk = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/sorting-tsc/src/sort.cpp")).unwrap();
    assert_eq!(c["skeleton"]["sort.cpp"], on_disk.as_str());
    assert_eq!(c["primary_file"], "sort.cpp");

    let (status, e) = call(&app, "GET", "/api/challenges/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(e["error"], "UnknownChallenge");
}

#[tokio::test]
async fn submission_lifecycle_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(dir.path());
    let app = router(Arc::clone(&service), None);

    let (status, sub) = call(&app, "POST", "/api/challenges/sorting-tsc/submissions", Some(json!({"source": "// VULN"}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(sub["status"], "queued");
    let id = sub["id"].as_str().unwrap().to_string();

    let (status, e) = call(&app, "POST", &format!("/api/submissions/{id}/hints"), None).await;
    assert_eq!((status, e["error"].as_str()), (StatusCode::CONFLICT, Some("NotYetAssessed")));
    let (_, view) = call(&app, "GET", &format!("/api/submissions/{id}"), None).await;
    assert_eq!(view["queue_length"], 1);

    service.drain().unwrap();
    let (_, view) = call(&app, "GET", &format!("/api/submissions/{id}"), None).await;
    assert_eq!(view["status"], "unsolved");
    assert_eq!(view["report"]["solved"], false);
    assert_eq!(view["queue_length"], 0);

    let (s1, h1) = call(&app, "POST", &format!("/api/submissions/{id}/hints"), None).await;
    let (s2, h2) = call(&app, "POST", &format!("/api/submissions/{id}/hints"), None).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!((h1["rung"].as_u64(), h2["rung"].as_u64()), (Some(0), Some(1)));
    assert_eq!(h1["guideline"], "CWE-208");

    // base64 body, solved, then no hints.
    let b64 = base64::engine::general_purpose::STANDARD.encode("int ok;");
    let (_, sub) = call(&app, "POST", "/api/challenges/sorting-tsc/submissions", Some(json!({"source_base64": b64}))).await;
    let solved = sub["id"].as_str().unwrap().to_string();
    service.drain().unwrap();
    let (_, view) = call(&app, "GET", &format!("/api/submissions/{solved}"), None).await;
    assert_eq!(view["status"], "solved");
    assert_eq!(view["source"]["sort.cpp"], "int ok;");
    let (status, e) = call(&app, "POST", &format!("/api/submissions/{solved}/hints"), None).await;
    assert_eq!((status, e["error"].as_str()), (StatusCode::CONFLICT, Some("AlreadySolved")));

    let (status, e) = call(&app, "GET", "/api/submissions/missing", None).await;
    assert_eq!((status, e["error"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownSubmission")));
}

#[tokio::test]
async fn bad_submissions() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(open(dir.path()), None);
    let url = "/api/challenges/sorting-tsc/submissions";

    let big = "x".repeat(1 << 20);
    let (status, e) = call(&app, "POST", url, Some(json!({ "source": big }))).await;
    assert_eq!((status, e["error"].as_str()), (StatusCode::PAYLOAD_TOO_LARGE, Some("PayloadTooLarge")));
    let big64 = base64::engine::general_purpose::STANDARD.encode(vec![b'x'; MAX_SOURCE_BYTES + 1]);
    let (status, _) = call(&app, "POST", url, Some(json!({ "source_base64": big64 }))).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);

    let (status, _) = call(&app, "POST", url, Some(json!({"source": "a", "files": {"sort.cpp": "b"}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", url, Some(json!({"files": {"../evil.cpp": "b"}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, e) = call(&app, "POST", "/api/challenges/nope/submissions", Some(json!({"source": "a"}))).await;
    assert_eq!((status, e["error"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownChallenge")));

    // Identical blobs are separate submissions.
    let (_, a) = call(&app, "POST", url, Some(json!({"source": "same"}))).await;
    let (_, b) = call(&app, "POST", url, Some(json!({"source": "same"}))).await;
    assert_ne!(a["id"], b["id"]);
}

#[tokio::test]
async fn static_files_are_served_below_the_root_only() {
    let dir = tempfile::tempdir().unwrap();
    let web = tempfile::tempdir().unwrap();
    std::fs::write(web.path().join("index.html"), "<h1>dojo</h1>").unwrap();
    let app = router(open(dir.path()), Some(web.path().to_path_buf()));
    let res = app.clone().oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert_eq!(res.headers()["content-type"], "text/html; charset=utf-8");
    let res = app.oneshot(Request::get("/../Cargo.toml").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.status(), StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn workers_drain_the_queue() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(dir.path());
    service.spawn_workers(2);
    let ids: Vec<String> = (0..6)
        .map(|i| {
            let source = if i % 2 == 0 { "VULN" } else { "fine" };
            service
                .submit("toctou-race", SubmitRequest {
                    source: Some(source.into()),
                    ..SubmitRequest::default()
                })
                .unwrap()
                .id
        })
        .collect();
    for _ in 0..200 {
        if ids.iter().all(|id| service.get_status(id).unwrap().status.is_terminal()) {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    for (i, id) in ids.iter().enumerate() {
        let expected = if i % 2 == 0 { SubmissionStatus::Unsolved } else { SubmissionStatus::Solved };
        assert_eq!(service.get_status(id).unwrap().status, expected);
    }
}

#[test]
fn restart_mid_assessment_requeues() {
    support::restart_requeues().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn service_state_machine(ops in prop::collection::vec(support::op(), 1..40)) {
        prop_assert_eq!(support::run_ops(&ops), Ok(()));
    }
}
