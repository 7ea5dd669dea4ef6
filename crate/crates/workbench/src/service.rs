//! HTTP/JSON service over one scenario.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use splatedit_core::afn::{self, FusionState};
use splatedit_core::cscs::{Selection, SelectionParams};
use splatedit_core::gap3d::{self, AttentionPrior};
use splatedit_core::metrics::MetricsReport;
use splatedit_core::optimizer::{self, Ablation, RunConfig};
use splatedit_core::{render, Image, ScalarMap};
use tower_http::services::ServeDir;

use crate::jobs::{JobError, JobManager};
use crate::scenario::Scenario;
use crate::{export, formats, imageio};

#[derive(Default)]
struct Session {
    key_view: Option<String>,
    priors: Option<(RunConfig, Vec<AttentionPrior>)>,
}

pub struct AppState {
    pub scenario: Arc<Scenario>,
    pub jobs: JobManager,
    session: Mutex<Session>,
}

impl AppState {
    pub fn new(scenario: Arc<Scenario>, runs_dir: PathBuf) -> Self {
        let jobs = JobManager::start(Arc::clone(&scenario), runs_dir);
        AppState { scenario, jobs, session: Mutex::new(Session::default()) }
    }

    fn session(&self) -> std::sync::MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, message)
    }

    fn conflict(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<splatedit_core::Error> for ApiError {
    fn from(e: splatedit_core::Error) -> Self {
        ApiError::bad_request(e.to_string())
    }
}

impl From<JobError> for ApiError {
    fn from(e: JobError) -> Self {
        match e {
            JobError::NotFound(_) => ApiError::not_found(e.to_string()),
            JobError::InvalidConfig(_) => ApiError::bad_request(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;
type AppRef = State<Arc<AppState>>;

/// JSON body parsing that reports the offending field path.
fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de)
        .map_err(|e| ApiError::bad_request(format!("at `{}`: {}", e.path(), e.inner())))
}

fn png(img: &Image) -> ApiResult<Response> {
    let bytes = imageio::encode_png(img).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/scenario", get(get_scenario))
        .route("/api/views", get(get_views))
        .route("/api/views/{id}/image", get(get_view_image))
        .route("/api/key_view", post(post_key_view).get(get_key_view))
        .route("/api/cscs", get(get_cscs))
        .route("/api/gap3d", post(post_gap3d))
        .route("/api/attn/{id}", get(get_attn))
        .route("/api/run", post(post_run).get(list_runs))
        .route("/api/run/{id}", get(get_run).delete(delete_run))
        .route("/api/metrics", get(get_metrics))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/ui", get(ui_placeholder)).route("/ui/", get(ui_placeholder)),
    }
}

async fn ui_placeholder() -> Html<&'static str> {
    Html("<!doctype html><title>workbench</title><p>No UI bundle configured; start with <code>--ui &lt;dir&gt;</code>. The JSON API lives under <code>/api/</code>.</p>")
}

async fn get_scenario(State(app): AppRef) -> Json<serde_json::Value> {
    let s = &app.scenario;
    Json(json!({
        "root": s.root,
        "gaussians": s.scene.len(),
        "views": s.view_ids(),
        "layers": s.layers,
        "prompt_src_id": s.prompt_src,
        "prompt_edit_id": s.prompt_edit,
        "embedding_dim": s.embeddings.dim(),
        "key_view": app.session().key_view,
    }))
}

#[derive(Serialize)]
struct ViewSummary<'a> {
    id: &'a str,
    width: usize,
    height: usize,
    s_v: f64,
    unedited: bool,
}

async fn get_views(State(app): AppRef) -> ApiResult<Json<Vec<serde_json::Value>>> {
    let inputs = app.scenario.edit_inputs();
    let scores = inputs.scores()?;
    let rows = app
        .scenario
        .views
        .iter()
        .zip(&scores)
        .map(|(v, (_, score))| {
            serde_json::to_value(ViewSummary {
                id: &v.camera.id,
                width: v.camera.width,
                height: v.camera.height,
                s_v: score.value,
                unedited: score.unedited,
            })
            .expect("summary serializes")
        })
        .collect();
    Ok(Json(rows))
}

#[derive(Deserialize)]
struct ImageQuery {
    kind: String,
}

async fn get_view_image(State(app): AppRef, Path(id): Path<String>, Query(q): Query<ImageQuery>) -> ApiResult<Response> {
    let view = app.scenario.view(&id).ok_or_else(|| ApiError::not_found(format!("unknown view {id}")))?;
    match q.kind.as_str() {
        "src" => png(&view.src),
        "edit" => png(&view.edit),
        "render" => {
            if is_running(&app) {
                let live = app.jobs.live();
                if let Some(v) = live.as_ref().and_then(|l| l.views.iter().find(|v| v.view_id == id)) {
                    return png(&v.render);
                }
            }
            let scene = app.jobs.last_scene().map(|s| (*s).clone()).unwrap_or_else(|| app.scenario.scene.clone());
            let (img, _) = render::render_color(&scene, &view.camera)?;
            png(&img)
        }
        other => Err(ApiError::bad_request(format!("kind must be src, edit or render, got {other}"))),
    }
}

fn is_running(app: &AppState) -> bool {
    app.jobs.list().iter().any(|j| matches!(j.state, crate::jobs::JobState::Running { .. }))
}

#[derive(Deserialize)]
struct KeyViewBody {
    view_id: String,
}

async fn post_key_view(State(app): AppRef, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let body: KeyViewBody = parse_body(&body)?;
    if app.scenario.view(&body.view_id).is_none() {
        return Err(ApiError::not_found(format!("unknown view {}", body.view_id)));
    }
    let mut session = app.session();
    session.key_view = Some(body.view_id.clone());
    session.priors = None;
    Ok(Json(json!({ "key_view": body.view_id })))
}

async fn get_key_view(State(app): AppRef) -> Json<serde_json::Value> {
    Json(json!({ "key_view": app.session().key_view }))
}

#[derive(Deserialize, Default)]
struct CscsQuery {
    k: Option<usize>,
    gamma: Option<f64>,
    soft_select: Option<bool>,
}

fn selection(app: &AppState, q: &CscsQuery) -> ApiResult<Selection> {
    let key = app.session().key_view.clone().ok_or_else(|| ApiError::conflict("no key view selected"))?;
    let mut params = SelectionParams::defaults_for(app.scenario.views.len());
    if let Some(k) = q.k {
        params.k = k;
    }
    if let Some(g) = q.gamma {
        params.gamma = g;
    }
    if let Some(s) = q.soft_select {
        params.soft_select = s;
    }
    Ok(app.scenario.edit_inputs().select(&key, &params)?)
}

async fn get_cscs(State(app): AppRef, Query(q): Query<CscsQuery>) -> ApiResult<Json<serde_json::Value>> {
    let sel = selection(&app, &q)?;
    Ok(Json(serde_json::to_value(&sel.rows).expect("rows serialize")))
}

/// Builds priors from the current key view. The body is an optional partial
/// run config (`k`, `gamma_cscs`, `normalize_by_mass`, `ablation`, ...).
async fn post_gap3d(State(app): AppRef, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let mut cfg: RunConfig = if body.iter().all(u8::is_ascii_whitespace) { RunConfig::default() } else { parse_body(&body)? };
    if cfg.key_view.is_none() {
        cfg.key_view = app.session().key_view.clone();
    }
    if cfg.ablation == Ablation::Only2d {
        return Err(ApiError::bad_request("ablation only_2d builds no prior"));
    }
    if cfg.ablation.uses_selection() && cfg.key_view.is_none() {
        return Err(ApiError::conflict("no key view selected"));
    }
    cfg.layers = app.scenario.layers.clone();
    let state = Arc::clone(&app);
    let cfg2 = cfg.clone();
    let (sel, priors) = tokio::task::spawn_blocking(move || {
        optimizer::build_priors(&state.scenario.scene, &state.scenario.edit_inputs(), &cfg2)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let summary: Vec<_> = priors
        .iter()
        .map(|p| {
            json!({
                "layer": p.layer,
                "views": p.views,
                "weights": p.weights,
                "uncovered": p.uncovered.len(),
                "max": p.scores.iter().copied().fold(0.0, f64::max),
            })
        })
        .collect();
    app.session().priors = Some((cfg, priors));
    Ok(Json(json!({ "priors": summary, "selection": sel.map(|s| s.rows) })))
}

#[derive(Deserialize)]
struct AttnQuery {
    kind: String,
    layer: Option<u32>,
    format: Option<String>,
}

fn scalar_response(map: &ScalarMap, format: Option<&str>) -> ApiResult<Response> {
    match format.unwrap_or("png") {
        "png" => png(&imageio::heatmap(map)),
        "atn" => {
            let bytes =
                formats::encode_atn(map).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
            Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
        }
        other => Err(ApiError::bad_request(format!("format must be png or atn, got {other}"))),
    }
}

async fn get_attn(State(app): AppRef, Path(id): Path<String>, Query(q): Query<AttnQuery>) -> ApiResult<Response> {
    let view = app.scenario.view(&id).ok_or_else(|| ApiError::not_found(format!("unknown view {id}")))?;
    let layer = q.layer.unwrap_or_else(|| app.scenario.layers[0]);
    let a2d = view.attention.get(&layer).ok_or_else(|| ApiError::not_found(format!("no layer {layer}")))?;
    let format = q.format.as_deref();
    if q.kind == "a2d" {
        return scalar_response(a2d, format);
    }
    if !matches!(q.kind.as_str(), "a3d" | "fused") {
        return Err(ApiError::bad_request(format!("kind must be a2d, a3d or fused, got {}", q.kind)));
    }

    // Latest iteration-boundary snapshot from a run, when there is one.
    if let Some(live) = app.jobs.live() {
        if let (Some(li), Some(v)) =
            (live.layers.iter().position(|l| *l == layer), live.views.iter().find(|v| v.view_id == id))
        {
            let maps = if q.kind == "a3d" { &v.a3d } else { &v.fused };
            if let Some(map) = maps.get(li) {
                return scalar_response(map, format);
            }
        }
    }

    // Otherwise from priors built through POST /api/gap3d, at t = 0 with W = 0.
    let session = app.session();
    let (cfg, priors) =
        session.priors.as_ref().ok_or_else(|| ApiError::conflict("no prior built yet; POST /api/gap3d first"))?;
    let prior = priors.iter().find(|p| p.layer == layer).ok_or_else(|| ApiError::not_found(format!("no prior for layer {layer}")))?;
    let a3d = gap3d::project_prior(&app.scenario.scene, prior, &view.camera)?;
    if q.kind == "a3d" {
        return scalar_response(&a3d, format);
    }
    if cfg.ablation == Ablation::NoAfn {
        return scalar_response(&a3d, format);
    }
    let fusion = FusionState::new(&[layer], cfg.bias_alpha, cfg.iterations, cfg.lambda_2d, cfg.lambda_3d_init)?;
    let g = afn::gate(&fusion.weights(layer)?, a2d, &a3d, fusion.bias()?)?;
    scalar_response(&afn::fuse(&g, a2d, &a3d)?, format)
}

async fn post_run(State(app): AppRef, body: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let mut cfg: RunConfig = parse_body(&body)?;
    if cfg.key_view.is_none() && cfg.ablation != Ablation::NoCscs && cfg.ablation != Ablation::Only2d {
        cfg.key_view = app.session().key_view.clone();
    }
    let id = app.jobs.submit(cfg)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": id }))))
}

async fn list_runs(State(app): AppRef) -> Json<serde_json::Value> {
    let jobs: Vec<_> = app.jobs.list().into_iter().map(|j| json!({ "id": j.id, "state": j.state })).collect();
    Json(json!(jobs))
}

async fn get_run(State(app): AppRef, Path(id): Path<String>) -> ApiResult<Json<crate::jobs::JobView>> {
    Ok(Json(app.jobs.poll(&id)?))
}

async fn delete_run(State(app): AppRef, Path(id): Path<String>) -> ApiResult<Json<crate::jobs::JobView>> {
    Ok(Json(app.jobs.cancel(&id)?))
}

#[derive(Deserialize)]
struct MetricsQuery {
    format: Option<String>,
}

async fn get_metrics(State(app): AppRef, Query(q): Query<MetricsQuery>) -> ApiResult<Response> {
    let s = &app.scenario;
    let ids = s.view_ids();
    let candidates = MetricsReport::from_table(&s.embeddings, &ids, &s.prompt_src, &s.prompt_edit)?;
    match q.format.as_deref().unwrap_or("json") {
        "json" => {
            let last = app.jobs.last_report();
            Ok(Json(json!({
                "candidates": candidates,
                "last_run": last.as_ref().map(|r| json!({ "ablation": r.ablation, "final_metrics": r.final_metrics })),
            }))
            .into_response())
        }
        "csv" => {
            let mut buf = Vec::new();
            export::write_metrics(&candidates, &mut buf)
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
            Ok(([(header::CONTENT_TYPE, "text/csv")], buf).into_response())
        }
        other => Err(ApiError::bad_request(format!("format must be json or csv, got {other}"))),
    }
}
