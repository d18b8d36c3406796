use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use bginv_cli::server::{router, QueueItem, ServerConfig};
use bginv_core::assessor::AnnotationSet;
use bginv_core::VarianceMatrixF64;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn write_matrices(dir: &Path, models: &[&str]) {
    std::fs::create_dir_all(dir).unwrap();
    for m in models {
        for p in ["Max@CONF", "Max@CONV-1"] {
            let mx = VarianceMatrixF64 {
                model_id: m.to_string(),
                position: p.to_string(),
                r: 2,
                d_max: 1.0,
                values: vec![0.0, 0.1, -0.1, 0.0],
            };
            mx.save(&dir.join(format!("{m}__{p}.json"))).unwrap();
        }
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    annotations: std::path::PathBuf,
    renders: std::path::PathBuf,
    app: Router,
}

fn fixture(models: &[&str]) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let matrices = dir.path().join("matrices");
    let renders = dir.path().join("render");
    std::fs::create_dir_all(&renders).unwrap();
    write_matrices(&matrices, models);
    std::fs::write(renders.join("m1__Max@CONF_scatter.png"), b"png").unwrap();
    let annotations = dir.path().join("annotations.jsonl");
    let app = router(&ServerConfig {
        matrices,
        renders: renders.clone(),
        annotations: annotations.clone(),
        static_dir: None,
    })
    .unwrap();
    Fixture {
        _dir: dir,
        annotations,
        renders,
        app,
    }
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_label(model: &str, annotator: &str, label: u8) -> Request<Body> {
    Request::post("/api/label")
        .header("content-type", "application/json")
        .body(Body::from(
            json!({ "model_id": model, "annotator": annotator, "label": label }).to_string(),
        ))
        .unwrap()
}

async fn queue(app: &Router, annotator: &str) -> Vec<QueueItem> {
    let (status, v) = call(app, get(&format!("/api/queue?annotator={annotator}"))).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_value(v).unwrap()
}

#[tokio::test(flavor = "current_thread")]
async fn queue_lists_unlabeled_models() {
    let f = fixture(&["m1", "m2", "m3"]);
    let items = queue(&f.app, "c1").await;
    assert_eq!(items.len(), 3);
    assert!(items.iter().all(|i| i.current_label.is_none()));
    assert_eq!(
        items[0].matrix_urls,
        vec!["/files/m1__Max@CONF.png", "/files/m1__Max@CONV-1.png"]
    );
    assert_eq!(items[0].scatter_url.as_deref(), Some("/files/m1__Max@CONF_scatter.png"));
    assert_eq!(items[1].scatter_url, None);
}

#[tokio::test(flavor = "current_thread")]
async fn labeled_models_move_to_the_back() {
    let f = fixture(&["m1", "m2", "m3"]);
    let (status, v) = call(&f.app, post_label("m1", "c1", 3)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["ok"], true);
    let items = queue(&f.app, "c1").await;
    let ids: Vec<&str> = items.iter().map(|i| i.model_id.as_str()).collect();
    assert_eq!(ids, ["m2", "m3", "m1"]);
    assert_eq!(items[2].current_label, Some(3));
    assert!(queue(&f.app, "c2").await.iter().all(|i| i.current_label.is_none()));
}

#[tokio::test(flavor = "current_thread")]
async fn rejects_bad_labels() {
    let f = fixture(&["m1"]);
    for l in [0, 4] {
        let (status, v) = call(&f.app, post_label("m1", "c1", l)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(v["ok"], false);
    }
    let (status, _) = call(&f.app, post_label("nope", "c1", 1)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let malformed = Request::post("/api/label")
        .header("content-type", "application/json")
        .body(Body::from("{\"model_id\": 3"))
        .unwrap();
    let (status, _) = call(&f.app, malformed).await;
    assert!(status.is_client_error());
    assert!(!f.annotations.exists() || AnnotationSet::load(&f.annotations).unwrap().is_empty());
}

#[tokio::test(flavor = "current_thread")]
async fn relabel_overwrites_with_timestamp() {
    let f = fixture(&["m1"]);
    call(&f.app, post_label("m1", "c1", 1)).await;
    let (_, v) = call(&f.app, post_label("m1", "c1", 2)).await;
    assert_eq!(v["replaced"], true);
    let text = std::fs::read_to_string(&f.annotations).unwrap();
    assert_eq!(text.lines().count(), 2);
    let set = AnnotationSet::load(&f.annotations).unwrap();
    assert_eq!(set.len(), 1);
    let row = set.get("m1", "c1").unwrap();
    assert_eq!(row.label, 2);
    assert!(row.ts.is_some());
}

#[tokio::test(flavor = "current_thread")]
async fn irr_tracks_annotations() {
    let f = fixture(&["m1", "m2", "m3", "m4"]);
    let (_, v) = call(&f.app, get("/api/irr")).await;
    assert_eq!(v["insufficient_overlap"], true);
    for (m, a, b) in [("m1", 1, 1), ("m2", 1, 2), ("m3", 2, 2), ("m4", 2, 2)] {
        call(&f.app, post_label(m, "x", a)).await;
        call(&f.app, post_label(m, "y", b)).await;
    }
    let (status, v) = call(&f.app, get("/api/irr")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["insufficient_overlap"], false);
    assert_eq!(v["annotators"], json!(["x", "y"]));
    let k = v["pairwise"][0]["kappa"].as_f64().unwrap();
    assert!((k - 0.5).abs() < 1e-12);
    // Same numbers as computing from the file directly.
    let direct = AnnotationSet::load(&f.annotations).unwrap().irr();
    assert_eq!(direct.pairwise[0].kappa, Some(k));
    assert_eq!(v["fleiss"]["kappa"].as_f64(), direct.fleiss.map(|f| f.kappa));
}

#[tokio::test(flavor = "current_thread")]
async fn serves_files_and_index() {
    let f = fixture(&["m1"]);
    std::fs::write(f.renders.join("m1__Max@CONF.png"), b"\x89PNG").unwrap();
    let res = f.app.clone().oneshot(get("/files/m1__Max@CONF.png")).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let res = f.app.clone().oneshot(get("/")).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let (status, _) = call(&f.app, get("/api/queue")).await;
    assert!(status.is_client_error());
}

#[tokio::test(flavor = "current_thread")]
async fn labels_survive_restart_and_feed_training_format() {
    let f = fixture(&["m1", "m2"]);
    call(&f.app, post_label("m1", "c1", 3)).await;
    call(&f.app, post_label("m2", "c1", 1)).await;
    let dir = f.annotations.parent().unwrap();
    let again = router(&ServerConfig {
        matrices: dir.join("matrices"),
        renders: f.renders.clone(),
        annotations: f.annotations.clone(),
        static_dir: None,
    })
    .unwrap();
    let items = queue(&again, "c1").await;
    assert!(items.iter().all(|i| i.current_label.is_some()));
    let majority = AnnotationSet::load(&f.annotations).unwrap().majority();
    assert_eq!(majority["m1"], 3);
    assert_eq!(majority["m2"], 1);
}
