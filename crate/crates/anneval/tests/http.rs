use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use laqg_anneval::*;
use serde_json::{json, Value};
use tower::ServiceExt;

fn runs(n: usize) -> Value {
    let models = ["lstm-copy", "transformer"];
    json!(models
        .iter()
        .map(|m| json!({
            "model": m,
            "items": (0..n).map(|i| json!({
                "example_id": format!("ex{i}"),
                "answer": format!("answer number {i} ."),
                "question": format!("what is {i} ?"),
                "answer_sentences": 1 + i % 7,
            })).collect::<Vec<_>>()
        }))
        .collect::<Vec<_>>())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body).await;
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, v)
}

async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn app(dir: &std::path::Path) -> (Arc<Store>, Router) {
    let store = Arc::new(Store::open(dir).unwrap());
    (store.clone(), router(store, None))
}

async fn new_study(app: &Router, id: &str, n_items: usize) {
    let (s, v) = call(app, "POST", "/studies", Some(json!({"id": id, "runs": runs(10), "n_items": n_items, "seed": 3}))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["items"], n_items);
}

async fn annotator(app: &Router, study: &str) -> String {
    let (s, v) = call(app, "POST", &format!("/studies/{study}/annotators"), None).await;
    assert_eq!(s, StatusCode::CREATED);
    v["annotator"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn an_annotator_sees_every_item_exactly_once() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(dir.path());
    new_study(&app, "s1", 6).await;
    let who = annotator(&app, "s1").await;
    let mut seen = Vec::new();
    loop {
        let (s, v) = call(&app, "GET", &format!("/studies/s1/next?annotator={who}"), None).await;
        assert_eq!(s, StatusCode::OK);
        if v["done"] == true {
            assert_eq!(v["progress"]["rated"], 6);
            break;
        }
        let item = &v["item"];
        assert!(item.get("model").is_none() && item.get("example_id").is_none());
        let id = item["item_id"].as_str().unwrap().to_string();
        assert!(!seen.contains(&id), "{id} served twice");
        let (s, _) = call(
            &app,
            "POST",
            "/studies/s1/ratings",
            Some(json!({"item_id": id, "annotator": who, "fluency": 4, "correctness": 3})),
        )
        .await;
        assert_eq!(s, StatusCode::CREATED);
        seen.push(id);
    }
    assert_eq!(seen.len(), 6);
    let ledger = std::fs::read_to_string(ledger_path(dir.path(), "s1")).unwrap();
    assert_eq!(ledger.lines().filter(|l| l.contains(r#""event":"rating""#)).count(), 6);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_double_submit_records_once() {
    let dir = tempfile::tempdir().unwrap();
    let (store, app) = app(dir.path());
    new_study(&app, "s2", 3).await;
    let who = annotator(&app, "s2").await;
    let item = store.snapshot("s2").unwrap().items[0].item_id.clone();
    let body = json!({"item_id": item, "annotator": who, "fluency": 5, "correctness": 5});
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (app, body) = (app.clone(), body.clone());
            tokio::spawn(async move { call(&app, "POST", "/studies/s2/ratings", Some(body)).await.0 })
        })
        .collect();
    let mut codes = Vec::new();
    for t in tasks {
        codes.push(t.await.unwrap());
    }
    assert_eq!(codes.iter().filter(|&&c| c == StatusCode::CREATED).count(), 1);
    assert_eq!(codes.iter().filter(|&&c| c == StatusCode::CONFLICT).count(), 7);
    assert_eq!(store.snapshot("s2").unwrap().ratings.len(), 1);
    let ledger = std::fs::read_to_string(ledger_path(dir.path(), "s2")).unwrap();
    assert_eq!(ledger.lines().filter(|l| l.contains(r#""event":"rating""#)).count(), 1);
}

#[tokio::test]
async fn bad_requests_are_rejected_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let (store, app) = app(dir.path());
    new_study(&app, "s3", 4).await;
    let who = annotator(&app, "s3").await;
    let item = store.snapshot("s3").unwrap().items[0].item_id.clone();
    for (f, c) in [(0, 3), (6, 3), (3, -1), (3, 99)] {
        let (s, v) = call(
            &app,
            "POST",
            "/studies/s3/ratings",
            Some(json!({"item_id": item, "annotator": who, "fluency": f, "correctness": c})),
        )
        .await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    }
    let (s, _) = call(&app, "POST", "/studies/s3/ratings", Some(json!({"item_id": item, "annotator": "ghost", "fluency": 3, "correctness": 3}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/studies/s3/ratings", Some(json!({"item_id": "item-9999", "annotator": who, "fluency": 3, "correctness": 3}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/studies/nope/next?annotator=x", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    // more items than examples
    let (s, _) = call(&app, "POST", "/studies", Some(json!({"id": "big", "runs": runs(3), "n_items": 50}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, "POST", "/studies", Some(json!({"id": "s3", "runs": runs(10), "n_items": 2}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(store.snapshot("s3").unwrap().ratings.is_empty());
}

#[tokio::test]
async fn agreement_waits_for_coverage_and_state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (store, app) = app(dir.path());
    new_study(&app, "s4", 4).await;
    let items: Vec<String> = store.snapshot("s4").unwrap().items.iter().map(|i| i.item_id.clone()).collect();
    let a = annotator(&app, "s4").await;
    let b = annotator(&app, "s4").await;
    assert_ne!(a, b);
    let grades = [(1, 1), (2, 3), (4, 4), (5, 3)];
    for (item, &(ga, _)) in items.iter().zip(&grades) {
        let r = json!({"item_id": item, "annotator": a, "fluency": ga, "correctness": ga});
        assert_eq!(call(&app, "POST", "/studies/s4/ratings", Some(r)).await.0, StatusCode::CREATED);
    }
    let (s, v) = call(&app, "GET", "/studies/s4/agreement", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["items"].as_array().unwrap().len(), 4);
    for (item, &(_, gb)) in items.iter().zip(&grades) {
        let r = json!({"item_id": item, "annotator": b, "fluency": gb, "correctness": gb});
        assert_eq!(call(&app, "POST", "/studies/s4/ratings", Some(r)).await.0, StatusCode::CREATED);
    }
    let (s, v) = call(&app, "GET", "/studies/s4/agreement", None).await;
    assert_eq!(s, StatusCode::OK);
    let alpha = v["fluency_alpha"].as_f64().unwrap();
    assert!((alpha - 445.0 / 648.0).abs() < 1e-9, "{alpha}");

    let (s, text) = call_raw(&app, "GET", "/studies/s4/summary?format=text", None).await;
    assert_eq!(s, StatusCode::OK);
    let text = String::from_utf8(text).unwrap();
    assert!(text.contains("lstm-copy") && text.contains("transformer"), "{text}");
    let (_, summary) = call(&app, "GET", "/studies/s4/summary", None).await;

    drop(app);
    drop(store);
    let (store, app) = self::app(dir.path());
    let before = replay(&ledger_path(dir.path(), "s4")).unwrap();
    assert_eq!(store.snapshot("s4").unwrap(), before);
    assert_eq!(before.ratings.len(), 8);
    assert_eq!(call(&app, "GET", "/studies/s4/summary", None).await.1, summary);
    assert_eq!(call(&app, "GET", "/studies/s4/agreement", None).await.1, v);
    let (_, list) = call(&app, "GET", "/studies", None).await;
    assert_eq!(list["studies"], json!(["s4"]));
}

#[tokio::test]
async fn static_bundle_is_served_alongside_the_api() {
    let data = tempfile::tempdir().unwrap();
    let web = tempfile::tempdir().unwrap();
    std::fs::write(web.path().join("index.html"), "<html>annotate</html>").unwrap();
    std::fs::write(web.path().join("app.js"), "console.log(1)").unwrap();
    let store = Arc::new(Store::open(data.path()).unwrap());
    let app = router(store, Some(web.path().to_path_buf()));
    let (s, body) = call_raw(&app, "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"<html>annotate</html>");
    assert_eq!(call_raw(&app, "GET", "/app.js", None).await.0, StatusCode::OK);
    assert_eq!(call(&app, "GET", "/studies", None).await.1, json!({"studies": []}));
    assert_eq!(call_raw(&app, "GET", "/missing.css", None).await.0, StatusCode::NOT_FOUND);
}
