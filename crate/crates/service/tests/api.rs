use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use labelopt_core::eval;
use labelopt_core::model::{Dataset, Element, LabelAlphabet};
use labelopt_core::report::RunReport;
use labelopt_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const LABELS: [&str; 3] = ["cat", "dog", "owl"];

fn write_dataset(dir: &Path, size: usize) -> (PathBuf, HashMap<String, String>) {
    let mut text = String::from("id,truth,payload_uri\n");
    let mut truth = HashMap::new();
    for i in 0..size {
        let id = format!("img{i:03}");
        let label = LABELS[i % 3];
        text.push_str(&format!("{id},,images/{id}.png\n"));
        truth.insert(id, label.to_string());
    }
    let path = dir.join("dataset.csv");
    std::fs::write(&path, text).unwrap();
    (path, truth)
}

struct Harness {
    _dir: tempfile::TempDir,
    data_dir: PathBuf,
    dataset: PathBuf,
    truth: HashMap<String, String>,
    app: Router,
}

fn harness(size: usize, simulate: bool, background: bool) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let (dataset, truth) = write_dataset(dir.path(), size);
    let data_dir = dir.path().join("sessions");
    let state = AppState::new(ServiceConfig {
        data_dir: data_dir.clone(),
        truth: simulate.then(|| truth.clone()),
        background,
    })
    .unwrap();
    Harness {
        _dir: dir,
        data_dir,
        dataset,
        truth,
        app: router(state),
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

fn synthetic(p: f64, count: usize) -> Value {
    let one = json!({"kind": "synthetic", "config": {"correct_probability": p, "seed": 3}});
    Value::Array(vec![one; count])
}

fn create_body(h: &Harness, alpha: f64, providers: Value) -> Value {
    json!({
        "dataset": h.dataset,
        "alphabet": LABELS,
        "config": {"alpha": alpha, "split": {"h_initial": 0.2, "seed": 7}, "providers": providers}
    })
}

async fn create(h: &Harness, body: Value) -> String {
    let (status, v) = call(&h.app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn queue(h: &Harness, id: &str) -> Vec<String> {
    let (status, v) = call(&h.app, "GET", &format!("/sessions/{id}/queue"), None).await;
    assert_eq!(status, StatusCode::OK);
    v["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["id"].as_str().unwrap().to_string())
        .collect()
}

fn pairs(h: &Harness, ids: &[String]) -> Value {
    json!({"labels": ids.iter().map(|id| json!({"id": id, "label": h.truth[id]})).collect::<Vec<_>>()})
}

async fn label_all(h: &Harness, id: &str) {
    let ids = queue(h, id).await;
    let (status, v) = call(&h.app, "POST", &format!("/sessions/{id}/labels"), Some(pairs(h, &ids))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["remaining"], 0);
}

fn dataset_with_truth(h: &Harness) -> Dataset {
    let a = LabelAlphabet::new(LABELS).unwrap();
    let mut ids: Vec<&String> = h.truth.keys().collect();
    ids.sort();
    let els = ids
        .into_iter()
        .map(|id| Element::new(id.clone()).with_truth(a.id(&h.truth[id]).unwrap()))
        .collect();
    Dataset::new(els, a).unwrap()
}

#[tokio::test]
async fn perfect_session_walkthrough() {
    let h = harness(100, true, false);
    let id = create(&h, create_body(&h, 1.0, synthetic(1.0, 2))).await;

    let (_, m) = call(&h.app, "GET", &format!("/sessions/{id}/metrics"), None).await;
    assert_eq!(m["manual_effort"], 0.0);
    assert_eq!(m["phase"], "AwaitingInitialLabels");

    let (status, v) = call(&h.app, "GET", &format!("/sessions/{id}/queue?limit=5"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["remaining"], 20);
    assert_eq!(v["items"].as_array().unwrap().len(), 5);
    assert_eq!(v["items"][0]["position"], 1);
    let first = v["items"][0]["id"].as_str().unwrap().to_string();
    assert_eq!(v["items"][0]["payload_uri"], format!("images/{first}.png"));

    let (status, _) = call(&h.app, "POST", &format!("/sessions/{id}/advance"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let ids = queue(&h, &id).await;
    let some = pairs(&h, &ids[..3]);
    let (status, v) = call(&h.app, "POST", &format!("/sessions/{id}/labels"), Some(some.clone())).await;
    assert_eq!((status, v["remaining"].clone()), (StatusCode::OK, json!(17)));
    let (status, v) = call(&h.app, "POST", &format!("/sessions/{id}/labels"), Some(some)).await;
    assert_eq!((status, v["remaining"].clone()), (StatusCode::OK, json!(17)));

    let truth = &h.truth[&ids[0]];
    let other = LABELS.iter().find(|l| *l != truth).unwrap();
    let conflict = json!({"labels": [{"id": ids[0], "label": other}]});
    let (status, _) = call(&h.app, "POST", &format!("/sessions/{id}/labels"), Some(conflict)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let unknown = json!({"labels": [{"id": "nope", "label": "cat"}]});
    let (status, _) = call(&h.app, "POST", &format!("/sessions/{id}/labels"), Some(unknown)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let bad = json!({"labels": [{"id": ids[5], "label": "horse"}]});
    let (status, _) = call(&h.app, "POST", &format!("/sessions/{id}/labels"), Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = call(&h.app, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    label_all(&h, &id).await;
    let (_, m) = call(&h.app, "GET", &format!("/sessions/{id}/metrics"), None).await;
    assert_eq!(m["manual_effort"], 0.2);

    let (status, v) = call(&h.app, "POST", &format!("/sessions/{id}/advance"), None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["phase"], "Done");
    assert_eq!(v["pending"], 0);
    let (status, _) = call(&h.app, "POST", &format!("/sessions/{id}/advance"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, report) = call(&h.app, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::OK);
    let report: RunReport = serde_json::from_value(report).unwrap();
    report.check_consistency().unwrap();
    let (_, m) = call(&h.app, "GET", &format!("/sessions/{id}/metrics"), None).await;
    assert_eq!(m["manual_effort"], report.metrics.manual_effort);
    assert_eq!(m["accuracy"], json!(report.metrics.accuracy));
    assert_eq!(report.metrics.manual_effort, 0.2);

    let d = dataset_with_truth(&h);
    assert_eq!(eval::manual_effort(&report), report.metrics.manual_effort);
    assert_eq!(Some(eval::accuracy(&report, &d).unwrap()), report.metrics.accuracy);
}

#[tokio::test]
async fn invalid_configs_are_rejected() {
    let h = harness(100, true, false);
    let (status, v) = call(&h.app, "POST", "/sessions", Some(create_body(&h, 0.0, synthetic(1.0, 1)))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("alpha"));
    let mut body = create_body(&h, 0.9, synthetic(1.0, 1));
    body["dataset"] = json!("/does/not/exist.csv");
    let (status, _) = call(&h.app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&h.app, "GET", "/sessions/missing/metrics", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn active_learning_rounds_are_capped() {
    let h = harness(300, true, false);
    let mut body = create_body(&h, 1.0, synthetic(0.7, 3));
    body["beta"] = json!(5);
    let id = create(&h, body).await;
    let (_, v) = call(&h.app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["beta"], 5);
    assert_eq!(v["phase"], "AwaitingInitialLabels");

    label_all(&h, &id).await;
    let (status, v) = call(&h.app, "POST", &format!("/sessions/{id}/advance"), None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["phase"], json!({"AwaitingIterationLabels": 1}));
    assert_eq!(v["pending"], 5);

    // Drive to completion through the simulation shortcut.
    let mut rounds = 1;
    loop {
        let (status, _) = call(&h.app, "POST", &format!("/sessions/{id}/autolabel"), None).await;
        assert_eq!(status, StatusCode::OK);
        let (_, v) = call(&h.app, "POST", &format!("/sessions/{id}/advance"), None).await;
        if v["phase"] == "Done" {
            break;
        }
        assert!(v["pending"].as_u64().unwrap() <= 5);
        rounds += 1;
        assert!(rounds < 100);
    }
    let (_, report) = call(&h.app, "GET", &format!("/sessions/{id}/report"), None).await;
    let report: RunReport = serde_json::from_value(report).unwrap();
    report.check_consistency().unwrap();
    assert_eq!(report.method, "opal-al");
}

#[tokio::test]
async fn autolabel_requires_simulation() {
    let h = harness(50, false, false);
    let body = json!({
        "dataset": h.dataset,
        "alphabet": LABELS,
        "config": {"alpha": 1.0, "split": {"h_initial": 0.2}, "providers": [{"kind": "softmax"}]}
    });
    let id = create(&h, body).await;
    let (status, _) = call(&h.app, "POST", &format!("/sessions/{id}/autolabel"), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (_, m) = call(&h.app, "GET", &format!("/sessions/{id}/metrics"), None).await;
    assert_eq!(m["accuracy"], Value::Null);
}

#[tokio::test]
async fn sessions_survive_restart() {
    let h = harness(100, true, false);
    let id = create(&h, create_body(&h, 1.0, synthetic(1.0, 2))).await;
    let ids = queue(&h, &id).await;
    call(&h.app, "POST", &format!("/sessions/{id}/labels"), Some(pairs(&h, &ids[..7]))).await;

    let state = AppState::new(ServiceConfig {
        data_dir: h.data_dir.clone(),
        truth: Some(h.truth.clone()),
        background: false,
    })
    .unwrap();
    let app = router(state);
    let (status, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["pending"], 13);
    let (_, m) = call(&app, "GET", &format!("/sessions/{id}/metrics"), None).await;
    assert_eq!(m["manual_labelled"], 7);
}

#[tokio::test]
async fn concurrent_submissions_are_serialized() {
    let h = harness(200, true, false);
    let id = create(&h, create_body(&h, 1.0, synthetic(1.0, 2))).await;
    let ids = queue(&h, &id).await;
    assert_eq!(ids.len(), 40);
    let mut tasks = Vec::new();
    for chunk in ids.chunks(3) {
        let app = h.app.clone();
        let uri = format!("/sessions/{id}/labels");
        let body = pairs(&h, chunk);
        // Each chunk is sent twice to exercise idempotent resubmission.
        for _ in 0..2 {
            let (app, uri, body) = (app.clone(), uri.clone(), body.clone());
            tasks.push(tokio::spawn(async move { call(&app, "POST", &uri, Some(body)).await.0 }));
        }
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let (_, m) = call(&h.app, "GET", &format!("/sessions/{id}/metrics"), None).await;
    assert_eq!(m["manual_labelled"], 40);
    assert_eq!(m["pending"], 0);
}

#[tokio::test]
async fn background_optimization_is_polled() {
    let h = harness(100, true, true);
    let id = create(&h, create_body(&h, 1.0, synthetic(1.0, 2))).await;
    label_all(&h, &id).await;
    let (status, _) = call(&h.app, "POST", &format!("/sessions/{id}/advance"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let mut phase = Value::Null;
    for _ in 0..200 {
        let (_, v) = call(&h.app, "GET", &format!("/sessions/{id}"), None).await;
        phase = v["phase"].clone();
        if phase != "Optimizing" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(phase, "Done");
    let (status, _) = call(&h.app, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[test]
fn truth_file_reader() {
    let dir = tempfile::tempdir().unwrap();
    let (path, truth) = write_dataset(dir.path(), 4);
    let mut text = String::from("id,truth,payload_uri\n");
    for (id, t) in &truth {
        text.push_str(&format!("{id},{t},\n"));
    }
    std::fs::write(&path, text).unwrap();
    assert_eq!(labelopt_service::read_truth(&path).unwrap(), truth);
}
