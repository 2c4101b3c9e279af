use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::DateTime;
use http_body_util::BodyExt;
use logknow_core::calibration::CalibrationStore;
use logknow_core::dataset::{build_corpus, CorpusFormat};
use logknow_core::model::Provenance;
use logknow_core::{KnowledgeDimension, QAPair, ReviewStatus, Source};
use logknow_service::{router, SharedStore};
use serde_json::{json, Value};
use tokio::sync::RwLock;
use tower::ServiceExt;

fn pair(domain: &str, n: usize) -> QAPair {
    let source = Source {
        domain: domain.into(),
        line: n as u64 + 1,
    };
    let dimension = KnowledgeDimension::ALL[n % 5];
    let template_id = format!("{domain}-T{n:06}").as_str().into();
    QAPair {
        id: QAPair::make_id(&template_id, &source, dimension),
        domain: domain.into(),
        dimension,
        question: format!("What does event {n} mean?"),
        log: format!("event {n} happened"),
        answer: format!("Event {n} means the service restarted cleanly."),
        status: ReviewStatus::Pending,
        provenance: Provenance {
            model: "mock".into(),
            generated_at: DateTime::UNIX_EPOCH,
            variation: 0,
            attempts: 1,
        },
        review_note: None,
        template_id,
        source,
        variables: vec![],
    }
}

fn seeded(n: usize) -> (SharedStore, Vec<QAPair>) {
    let pairs: Vec<_> = (0..n).map(|i| pair(if i % 2 == 0 { "HDFS" } else { "Linux" }, i)).collect();
    let mut store = CalibrationStore::in_memory();
    store.enqueue(&pairs).unwrap();
    (Arc::new(RwLock::new(store)), pairs)
}

async fn call(store: &SharedStore, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router(store.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn json_call(store: &SharedStore, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call(store, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap())
}

fn review_uri(id: &str) -> String {
    // ids contain '@', ':' and '#'
    let encoded: String = id
        .bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect();
    format!("/api/pairs/{encoded}/review")
}

#[tokio::test]
async fn paging_over_pending() {
    let (store, _) = seeded(12);
    let (s, first) = json_call(&store, "GET", "/api/pairs?status=pending&page=1&page_size=10", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(first["items"].as_array().unwrap().len(), 10);
    assert_eq!(first["total"], 12);
    let (_, second) = json_call(&store, "GET", "/api/pairs?status=pending&page=2&page_size=10", None).await;
    assert_eq!(second["items"].as_array().unwrap().len(), 2);
    let (_, accepted) = json_call(&store, "GET", "/api/pairs?status=accepted", None).await;
    assert_eq!(accepted["total"], 0);
}

#[tokio::test]
async fn review_workflow_and_stats() {
    let (store, pairs) = seeded(12);
    for p in &pairs[..3] {
        let (s, body) = json_call(
            &store,
            "POST",
            &review_uri(&p.id),
            Some(json!({"verdict": "accept", "reviewer": "curator"})),
        )
        .await;
        assert_eq!(s, StatusCode::OK, "{body}");
        assert_eq!(body["status"], "accepted");
    }
    let (s, body) = json_call(
        &store,
        "POST",
        &review_uri(&pairs[3].id),
        Some(json!({"verdict": "reject", "note": "off topic", "reviewer": "curator"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["review_note"], "off topic");

    let (_, stats) = json_call(&store, "GET", "/api/stats", None).await;
    assert_eq!((stats["pending"].as_u64(), stats["accepted"].as_u64(), stats["rejected"].as_u64()), (Some(8), Some(3), Some(1)));
    assert_eq!(stats["per_domain"]["HDFS"]["pending"].as_u64().unwrap() + stats["per_domain"]["Linux"]["pending"].as_u64().unwrap(), 8);

    let (_, pending) = json_call(&store, "GET", "/api/pairs?status=pending", None).await;
    assert_eq!(pending["total"], 8);

    let (s, export) = call(&store, "GET", "/api/export?status=accepted", None).await;
    assert_eq!(s, StatusCode::OK);
    let exported: Vec<QAPair> = export.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(exported.len(), 3);
    let corpus = build_corpus(&exported, CorpusFormat::Instruction).unwrap();
    assert_eq!(corpus.records.len(), 3);
}

#[tokio::test]
async fn retried_submission_is_recorded_once() {
    let (store, pairs) = seeded(2);
    let body = json!({"verdict": "accept", "reviewer": "curator"});
    for _ in 0..2 {
        let (s, _) = call(&store, "POST", &review_uri(&pairs[0].id), Some(body.clone())).await;
        assert_eq!(s, StatusCode::OK);
    }
    assert_eq!(store.read().await.verdicts(&pairs[0].id).len(), 1);
    let (_, stats) = json_call(&store, "GET", "/api/stats", None).await;
    assert_eq!(stats["accepted"], 1);
}

#[tokio::test]
async fn errors_are_structured() {
    let (store, pairs) = seeded(1);
    let (s, body) = json_call(&store, "POST", "/api/pairs/nope/review", Some(json!({"verdict": "accept"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "not_found");
    assert!(body["error"].as_str().unwrap().contains("nope"));

    let (s, body) = json_call(&store, "POST", &review_uri(&pairs[0].id), Some(json!({"verdict": "maybe"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "bad_request");

    let (s, body) = json_call(&store, "GET", "/api/pairs?page_size=501", None).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
    let (s, _) = json_call(&store, "GET", "/api/pairs?status=bogus", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, body) = json_call(&store, "GET", "/api/missing", None).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
}

#[tokio::test]
async fn verdicts_survive_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("review.jsonl");
    let pairs: Vec<_> = (0..4).map(|i| pair("HDFS", i)).collect();
    {
        let mut s = CalibrationStore::open(&path).unwrap();
        s.enqueue(&pairs).unwrap();
        let store: SharedStore = Arc::new(RwLock::new(s));
        let (st, _) = call(&store, "POST", &review_uri(&pairs[1].id), Some(json!({"verdict": "reject"}))).await;
        assert_eq!(st, StatusCode::OK);
    }
    let reopened = CalibrationStore::open(&path).unwrap();
    assert_eq!(reopened.stats().rejected, 1);
    assert_eq!(reopened.verdicts(&pairs[1].id)[0].reviewer, "anonymous");
}
