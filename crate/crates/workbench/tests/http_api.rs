mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use splatedit_workbench::scenario::load_scenario;
use splatedit_workbench::{formats, service};
use tower::ServiceExt;

struct Harness {
    app: Router,
    _dir: tempfile::TempDir,
}

fn harness(ui: bool) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    common::write_small(&dir.path().join("scenario"), 2);
    let scenario = Arc::new(load_scenario(&dir.path().join("scenario")).unwrap());
    let ui_dir = ui.then(|| {
        let ui = dir.path().join("ui");
        std::fs::create_dir_all(&ui).unwrap();
        std::fs::write(ui.join("index.html"), "<html>workbench ui</html>").unwrap();
        ui
    });
    let state = Arc::new(service::AppState::new(scenario, dir.path().join("runs")));
    Harness { app: service::router(state, ui_dir), _dir: dir }
}

impl Harness {
    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(v) => req.header("content-type", "application/json").body(Body::from(v.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn json(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.call(method, uri, body).await;
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    async fn finish(&self, job: &str) -> Value {
        for _ in 0..1200 {
            let (status, v) = self.json("GET", &format!("/api/run/{job}"), None).await;
            assert_eq!(status, StatusCode::OK);
            if matches!(v["state"].as_str(), Some("done" | "failed" | "cancelled")) {
                return v;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
        panic!("job {job} did not finish");
    }
}

#[tokio::test]
async fn key_view_then_selection() {
    let h = harness(false);
    let (status, _) = h.json("GET", "/api/cscs", None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, v) = h.json("POST", "/api/key_view", Some(json!({ "view_id": "v05" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["key_view"], "v05");

    let (status, rows) = h.json("GET", "/api/cscs?k=6&gamma=10", None).await;
    assert_eq!(status, StatusCode::OK);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[0]["view_id"], "v05");
    assert_eq!(rows[0]["weight"], 1.0);
    assert_eq!(rows.iter().filter(|r| r["selected"] == true).count(), 6);

    let (status, _) = h.json("POST", "/api/key_view", Some(json!({ "view_id": "nope" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn scenario_views_and_images() {
    let h = harness(false);
    let (_, s) = h.json("GET", "/api/scenario", None).await;
    assert_eq!(s["gaussians"], 500);
    assert_eq!(s["layers"], json!([0, 1]));
    let (_, views) = h.json("GET", "/api/views", None).await;
    assert_eq!(views.as_array().unwrap().len(), 20);
    assert!(views[0]["s_v"].is_number());
    for kind in ["src", "edit", "render"] {
        let (status, bytes) = h.call("GET", &format!("/api/views/v03/image?kind={kind}"), None).await;
        assert_eq!(status, StatusCode::OK, "{kind}");
        assert_eq!(&bytes[1..4], b"PNG");
    }
    let (status, _) = h.call("GET", "/api/views/v03/image?kind=depth", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = h.call("GET", "/api/views/zz/image?kind=src", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn prior_then_attention_maps() {
    let h = harness(false);
    let (status, _) = h.json("POST", "/api/gap3d", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    h.json("POST", "/api/key_view", Some(json!({ "view_id": "v00" }))).await;
    let (status, v) = h.json("POST", "/api/gap3d", Some(json!({ "k": 4 }))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["priors"].as_array().unwrap().len(), 2);
    assert_eq!(v["priors"][0]["views"].as_array().unwrap().len(), 4);

    for kind in ["a2d", "a3d", "fused"] {
        let (status, bytes) = h.call("GET", &format!("/api/attn/v02?kind={kind}&layer=1&format=atn"), None).await;
        assert_eq!(status, StatusCode::OK, "{kind}");
        let map = formats::decode_atn(&bytes).unwrap();
        assert_eq!(map.width, 32);
        assert!(map.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
    let (status, bytes) = h.call("GET", "/api/attn/v02?kind=fused", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&bytes[1..4], b"PNG");
}

#[tokio::test]
async fn run_lifecycle() {
    let h = harness(false);
    h.json("POST", "/api/key_view", Some(json!({ "view_id": "v00" }))).await;
    let (status, v) = h.json("POST", "/api/run", Some(json!({ "T": 3, "lr_color": 1.0 }))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = v["job_id"].as_str().unwrap().to_string();

    let done = h.finish(&job).await;
    assert_eq!(done["state"], "done", "{done}");
    assert_eq!(done["config"]["key_view"], "v00");
    assert_eq!(done["iterations"].as_array().unwrap().len(), 3);
    assert_eq!(done["report"]["T"], 3);
    assert!(done["report"]["final_metrics"]["proxy_ctids_key"].is_number());
    let artifacts = std::path::PathBuf::from(done["artifacts"].as_str().unwrap());
    for f in ["config.json", "report.json", "iterations.csv", "scene.gsb", "prior_l0.gap"] {
        assert!(artifacts.join(f).exists(), "{f}");
    }

    // Maps now come from the run's last iteration.
    let (status, bytes) = h.call("GET", "/api/attn/v07?kind=fused&layer=0&format=atn", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(formats::decode_atn(&bytes).unwrap().width, 32);

    let (_, list) = h.json("GET", "/api/run", None).await;
    assert_eq!(list[0]["id"], job.as_str());
    let (_, metrics) = h.json("GET", "/api/metrics", None).await;
    assert_eq!(metrics["last_run"]["ablation"], "full");
    let (status, csv) = h.call("GET", "/api/metrics?format=csv", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(csv).unwrap().lines().count() >= 21);
}

#[tokio::test]
async fn no_afn_skips_gate_training() {
    let h = harness(false);
    let (status, v) =
        h.json("POST", "/api/run", Some(json!({ "T": 2, "ablation": "no_afn", "key_view": "v01" }))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let done = h.finish(v["job_id"].as_str().unwrap()).await;
    assert_eq!(done["state"], "done", "{done}");
    assert_eq!(done["report"]["gate_training_skipped"], true);
    assert_eq!(done["report"]["gap3d_skipped"], false);
}

#[tokio::test]
async fn cancel_a_long_run() {
    let h = harness(false);
    let (_, v) = h.json("POST", "/api/run", Some(json!({ "T": 5000, "ablation": "no_cscs" }))).await;
    let job = v["job_id"].as_str().unwrap().to_string();
    let (status, _) = h.json("DELETE", &format!("/api/run/{job}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let done = h.finish(&job).await;
    assert_eq!(done["state"], "cancelled");
    assert!(done["iterations"].as_array().unwrap().len() < 5000);
}

#[tokio::test]
async fn bad_requests() {
    let h = harness(false);
    let (status, v) = h.json("POST", "/api/run", Some(json!({ "T": "many", "key_view": "v00" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("T"), "{v}");
    let (status, v) = h.json("POST", "/api/run", Some(json!({ "lr_colour": 1.0, "key_view": "v00" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
    let (status, _) = h.json("POST", "/api/run", Some(json!({ "key_view": "v99" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = h.json("POST", "/api/run", Some(json!({ "T": 3 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, v) = h.json("GET", "/api/run/job-9999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(v["error"].is_string());
    let (status, _) = h.json("DELETE", "/api/run/job-9999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn ui_is_served() {
    let h = harness(true);
    let (status, bytes) = h.call("GET", "/ui/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(bytes).unwrap().contains("workbench ui"));
    let h = harness(false);
    let (status, _) = h.call("GET", "/ui/", None).await;
    assert_eq!(status, StatusCode::OK);
}
