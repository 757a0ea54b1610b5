//! HTTP API over texweave projects.
//!
//! Projects live in memory and are persisted under the data directory after
//! every mutation. Each project has one writer at a time; decompositions run
//! as background jobs whose status is polled.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, patch, post};
use axum::{Json, Router};
use image::ImageEncoder;
use serde::{Deserialize, Serialize};
use texweave::error::Error;
use texweave::optim::DecomposeOptions;
use texweave::pipeline::{Filter, MaskKind, PipelineConfig};
use texweave::project::{EditOp, Project, SegmentationParams};
use texweave::slic::{DEFAULT_COMPACTNESS, DEFAULT_ITERATIONS};
use uuid::Uuid;

pub const DEFAULT_UPLOAD_LIMIT: usize = 16 * 1024 * 1024;
const MAX_RENDER_WIDTH: u32 = 8192;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: Uuid,
    pub project_id: Uuid,
    pub state: JobState,
    pub iteration: usize,
    pub total: usize,
    pub l1: Option<f64>,
    pub tv: Option<f64>,
    pub loss: Option<f64>,
    pub error: Option<String>,
}

struct Slot {
    project: tokio::sync::Mutex<Project>,
    running: AtomicBool,
}

struct Inner {
    data_dir: PathBuf,
    max_upload: usize,
    projects: Mutex<HashMap<Uuid, Arc<Slot>>>,
    jobs: Mutex<HashMap<Uuid, Arc<Mutex<JobStatus>>>>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(data_dir: PathBuf, max_upload: usize) -> Self {
        Self {
            inner: Arc::new(Inner {
                data_dir,
                max_upload,
                projects: Mutex::new(HashMap::new()),
                jobs: Mutex::new(HashMap::new()),
            }),
        }
    }

    fn project_dir(&self, id: Uuid) -> PathBuf {
        self.inner.data_dir.join(id.to_string())
    }

    /// The in-memory project, loading it from disk on first use.
    async fn slot(&self, id: &str) -> ApiResult<(Uuid, Arc<Slot>)> {
        let id = Uuid::parse_str(id).map_err(|_| ApiError::not_found(format!("project {id}")))?;
        if let Some(slot) = self.inner.projects.lock().unwrap().get(&id) {
            return Ok((id, slot.clone()));
        }
        let dir = self.project_dir(id);
        if !dir.join("manifest.json").is_file() {
            return Err(ApiError::not_found(format!("project {id}")));
        }
        let project = tokio::task::spawn_blocking(move || Project::load(&dir))
            .await
            .expect("loader task")?;
        let mut map = self.inner.projects.lock().unwrap();
        let slot = map.entry(id).or_insert_with(|| {
            Arc::new(Slot {
                project: tokio::sync::Mutex::new(project),
                running: AtomicBool::new(false),
            })
        });
        Ok((id, slot.clone()))
    }

    async fn snapshot(&self, id: &str) -> ApiResult<(Uuid, Project)> {
        let (id, slot) = self.slot(id).await?;
        let project = slot.project.lock().await.clone();
        Ok((id, project))
    }

    async fn decomposed(&self, id: &str) -> ApiResult<(Uuid, Project)> {
        let (id, project) = self.snapshot(id).await?;
        if !project.is_decomposed() {
            return Err(ApiError::conflict("project has not been decomposed"));
        }
        Ok((id, project))
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.inner.max_upload;
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(project_info))
        .route("/projects/{id}/decompose", post(start_decompose))
        .route("/projects/{id}/render", get(render))
        .route("/projects/{id}/masks/{file}", get(mask_preview))
        .route("/projects/{id}/metrics", get(metrics))
        .route("/projects/{id}/edits", patch(add_edit))
        .route("/projects/{id}/edits/{edit_id}", delete(undo_edit))
        .route("/projects/{id}/assets", post(add_asset))
        .route("/jobs/{job_id}", get(job_status))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

fn content_type(headers: &HeaderMap) -> String {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase()
}

async fn upload_bytes(state: &AppState, req: Request) -> ApiResult<Bytes> {
    let ct = content_type(req.headers());
    if ct.starts_with("multipart/form-data") {
        let mut form = Multipart::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(e.status(), e.body_text()))?;
        while let Some(field) = form
            .next_field()
            .await
            .map_err(|e| ApiError::new(e.status(), e.body_text()))?
        {
            if field.file_name().is_some() || field.name() == Some("image") {
                return field
                    .bytes()
                    .await
                    .map_err(|e| ApiError::new(e.status(), e.body_text()));
            }
        }
        Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "multipart body has no image part",
        ))
    } else if ct.starts_with("image/") {
        Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(e.status(), e.body_text()))
    } else {
        Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "expected multipart/form-data or an image body",
        ))
    }
}

async fn create_project(State(state): State<AppState>, req: Request) -> ApiResult<impl IntoResponse> {
    let bytes = upload_bytes(&state, req).await?;
    let project = Project::from_image_bytes(&bytes).map_err(|e| {
        ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            format!("not a PNG or JPEG image: {e}"),
        )
    })?;
    let id = Uuid::new_v4();
    let dir = state.project_dir(id);
    let project = tokio::task::spawn_blocking(move || project.save(&dir).map(|_| project))
        .await
        .expect("save task")?;
    state.inner.projects.lock().unwrap().insert(
        id,
        Arc::new(Slot {
            project: tokio::sync::Mutex::new(project),
            running: AtomicBool::new(false),
        }),
    );
    Ok((
        StatusCode::CREATED,
        Json(serde_json::json!({ "project_id": id })),
    ))
}

async fn project_info(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let (id, p) = state.snapshot(&id).await?;
    let m = p.manifest();
    let etag = if p.is_decomposed() {
        Some(p.etag(&id.to_string())?)
    } else {
        None
    };
    Ok(Json(serde_json::json!({
        "project_id": id,
        "height": m.height,
        "width": m.width,
        "decomposed": p.is_decomposed(),
        "decomposition": m.decomposition,
        "edits": m.edits,
        "ranges": MaskKind::ALL.iter().map(|&k| (k.name(), m.ranges[k.index()])).collect::<HashMap<_, _>>(),
        "preview_etag": etag,
    })))
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DecomposeRequest {
    segments: usize,
    compactness: f32,
    iters: usize,
    lr: f64,
    tv: f64,
    disabled: Vec<String>,
}

impl Default for DecomposeRequest {
    fn default() -> Self {
        Self {
            segments: 1000,
            compactness: DEFAULT_COMPACTNESS,
            iters: 100,
            lr: 0.01,
            tv: 0.2,
            disabled: Vec::new(),
        }
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("malformed body: {e}")))
}

async fn start_decompose(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let (id, slot) = state.slot(&id).await?;
    let req: DecomposeRequest = if body.iter().all(u8::is_ascii_whitespace) {
        DecomposeRequest::default()
    } else {
        parse_json(&body)?
    };
    let mut cfg = PipelineConfig::default();
    for name in &req.disabled {
        cfg.enabled.set(Filter::from_name(name)?, false);
    }
    let opts = DecomposeOptions {
        iterations: req.iters,
        learning_rate: req.lr,
        lambda_tv: req.tv,
        ..Default::default()
    };
    opts.validate()?;
    if !(req.compactness > 0.0) || req.segments == 0 {
        return Err(ApiError::invalid("segments and compactness must be positive"));
    }
    let seg = SegmentationParams {
        segments: req.segments,
        compactness: req.compactness,
        iterations: DEFAULT_ITERATIONS,
    };
    if slot
        .running
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .is_err()
    {
        return Err(ApiError::conflict("a decomposition is already running"));
    }
    let job_id = Uuid::new_v4();
    let job = Arc::new(Mutex::new(JobStatus {
        job_id,
        project_id: id,
        state: JobState::Queued,
        iteration: 0,
        total: req.iters,
        l1: None,
        tv: None,
        loss: None,
        error: None,
    }));
    state.inner.jobs.lock().unwrap().insert(job_id, job.clone());
    let dir = state.project_dir(id);
    tokio::task::spawn_blocking(move || {
        let mut work = slot.project.blocking_lock().clone();
        job.lock().unwrap().state = JobState::Running;
        let result = work
            .decompose(seg, cfg, &opts, |row| {
                let mut j = job.lock().unwrap();
                j.iteration = row.iteration + 1;
                j.l1 = Some(row.l1);
                j.tv = Some(row.tv);
                j.loss = Some(row.total);
            })
            .and_then(|d| {
                work.save(&dir)?;
                Ok(d)
            });
        match result {
            Ok(d) => {
                *slot.project.blocking_lock() = work;
                slot.running.store(false, Ordering::SeqCst);
                let mut j = job.lock().unwrap();
                j.l1 = Some(d.final_l1);
                j.tv = Some(d.final_tv);
                j.loss = Some(d.final_total);
                j.state = JobState::Done;
            }
            Err(e) => {
                slot.running.store(false, Ordering::SeqCst);
                let mut j = job.lock().unwrap();
                j.error = Some(e.to_string());
                j.state = JobState::Failed;
            }
        }
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(serde_json::json!({ "job_id": job_id })),
    ))
}

async fn job_status(State(state): State<AppState>, Path(job_id): Path<String>) -> ApiResult<Json<JobStatus>> {
    let id = Uuid::parse_str(&job_id).map_err(|_| ApiError::not_found(format!("job {job_id}")))?;
    let job = state
        .inner
        .jobs
        .lock()
        .unwrap()
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("job {job_id}")))?;
    let status = job.lock().unwrap().clone();
    Ok(Json(status))
}

#[derive(Debug, Deserialize)]
struct RenderQuery {
    width: Option<u32>,
}

fn png_response(bytes: Vec<u8>, etag: Option<String>) -> Response {
    let mut resp = ([(header::CONTENT_TYPE, "image/png")], bytes).into_response();
    if let Some(tag) = etag {
        if let Ok(v) = HeaderValue::from_str(&format!("\"{tag}\"")) {
            resp.headers_mut().insert(header::ETAG, v);
        }
    }
    resp
}

fn matches_etag(headers: &HeaderMap, tag: &str) -> bool {
    headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim().trim_matches('"') == tag))
}

fn resize_png(project: &Project, width: u32) -> texweave::error::Result<Vec<u8>> {
    let rgb = project.render()?.to_rgb8()?;
    let height = ((rgb.height() as u64 * width as u64 + rgb.width() as u64 / 2) / rgb.width() as u64).max(1) as u32;
    let small = image::imageops::resize(&rgb, width, height, image::imageops::FilterType::Lanczos3);
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out).write_image(
        small.as_raw(),
        width,
        height,
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

async fn render(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RenderQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let (id, project) = state.decomposed(&id).await?;
    let native = project.manifest().width as u32;
    let width = match q.width {
        Some(0) => return Err(ApiError::invalid("width must be positive")),
        Some(w) if w > MAX_RENDER_WIDTH => {
            return Err(ApiError::invalid(format!("width is capped at {MAX_RENDER_WIDTH}")))
        }
        Some(w) if w != native => Some(w),
        _ => None,
    };
    let mut tag = project.etag(&id.to_string())?;
    if let Some(w) = width {
        tag = format!("{tag}-w{w}");
    }
    if matches_etag(&headers, &tag) {
        return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, format!("\"{tag}\""))]).into_response());
    }
    let bytes = tokio::task::spawn_blocking(move || match width {
        Some(w) => resize_png(&project, w),
        None => project.render_png(),
    })
    .await
    .expect("render task")?;
    Ok(png_response(bytes, Some(tag)))
}

async fn mask_preview(
    State(state): State<AppState>,
    Path((id, file)): Path<(String, String)>,
) -> ApiResult<Response> {
    let kind = file
        .strip_suffix(".png")
        .and_then(|name| MaskKind::from_name(name).ok())
        .ok_or_else(|| ApiError::not_found(format!("mask {file}")))?;
    let (_, project) = state.decomposed(&id).await?;
    let bytes = tokio::task::spawn_blocking(move || project.mask_preview_png(kind))
        .await
        .expect("preview task")?;
    Ok(png_response(bytes, None))
}

async fn metrics(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let (_, project) = state.decomposed(&id).await?;
    let m = tokio::task::spawn_blocking(move || project.metrics(None))
        .await
        .expect("metrics task")?;
    Ok(Json(m))
}

/// Runs `f` on the project under its write lock and persists the result.
async fn mutate<R: Send + 'static>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&mut Project) -> ApiResult<R> + Send + 'static,
) -> ApiResult<(R, String)> {
    let (id, slot) = state.slot(id).await?;
    if slot.running.load(Ordering::SeqCst) {
        return Err(ApiError::conflict("a decomposition is running"));
    }
    let dir = state.project_dir(id);
    tokio::task::spawn_blocking(move || {
        let mut project = slot.project.blocking_lock();
        let mut work = project.clone();
        let out = f(&mut work)?;
        work.save(&dir)?;
        let tag = if work.is_decomposed() {
            work.etag(&id.to_string())?
        } else {
            String::new()
        };
        *project = work;
        Ok((out, tag))
    })
    .await
    .expect("edit task")
}

async fn add_edit(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let op: EditOp = parse_json(&body)?;
    let (edit_id, tag) = mutate(&state, &id, move |p| {
        if !p.is_decomposed() {
            return Err(ApiError::conflict("project has not been decomposed"));
        }
        Ok(p.apply_edit(op)?)
    })
    .await?;
    Ok(Json(serde_json::json!({ "edit_id": edit_id, "preview_etag": tag })))
}

async fn undo_edit(
    State(state): State<AppState>,
    Path((id, edit_id)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    let edit_id: u64 = edit_id
        .parse()
        .map_err(|_| ApiError::not_found(format!("edit {edit_id}")))?;
    let (remaining, tag) = mutate(&state, &id, move |p| {
        if !p.edits().iter().any(|e| e.id == edit_id) {
            return Err(ApiError::not_found(format!("edit {edit_id}")));
        }
        p.undo(edit_id)?;
        Ok(p.edits().len())
    })
    .await?;
    Ok(Json(serde_json::json!({ "edits": remaining, "preview_etag": tag })))
}

async fn add_asset(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    if body.is_empty() {
        return Err(ApiError::invalid("empty asset"));
    }
    let bytes = body.to_vec();
    let (asset_id, _) = mutate(&state, &id, move |p| Ok(p.add_asset(bytes))).await?;
    Ok((
        StatusCode::CREATED,
        Json(serde_json::json!({ "asset_id": asset_id })),
    ))
}
