//! HTTP routes and the shared service state.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use insitu_core::annotate::{Annotation, ShapeKind};
use insitu_core::bundle::CalibrationBundle;
use insitu_core::export::ExportFormat;
use insitu_core::geom::Pixel;
use insitu_core::raster::sequence_file_name;
use insitu_core::sim::{Renderer, Scenario};

use crate::archive::session_archive;
use crate::capture::{capture_scene, frame_image, run_capture};
use crate::error::ApiError;
use crate::session::{
    default_tip_offset, CaptureStatus, Event, FrameSource, SampleInput, SampleOutcome, Session, SessionConfig,
    SessionState, REFERENCE_FRAME,
};
use crate::store::{load_session, EventLog};

const SESSIONS_DIR: &str = "sessions";

struct Entry {
    session: Session,
    log: EventLog,
    renderer: Option<Arc<Renderer>>,
}

impl Entry {
    /// Applies and persists an event; the session is untouched if either
    /// step fails.
    fn commit(&mut self, event: Event) -> Result<(), ApiError> {
        let mut next = self.session.clone();
        next.apply(&event)?;
        self.log.append(&event)?;
        self.session = next;
        Ok(())
    }

    fn renderer(&mut self) -> Result<Arc<Renderer>, ApiError> {
        if let Some(r) = &self.renderer {
            return Ok(r.clone());
        }
        let s = &self.session.config.scenario;
        let r = Arc::new(Renderer::new(&s.rig, s.scene.supersample)?);
        self.renderer = Some(r.clone());
        Ok(r)
    }
}

type Shared = Arc<Mutex<Entry>>;

struct Inner {
    data_dir: PathBuf,
    default_bundle: Option<CalibrationBundle<f64>>,
    sessions: RwLock<HashMap<String, Shared>>,
    next_id: AtomicU64,
}

/// Service state: sessions in memory, backed by their event logs.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Opens `data_dir`, replaying every stored session. A capture that was
    /// running when the service stopped is marked failed.
    pub fn open(data_dir: &Path, default_bundle: Option<CalibrationBundle<f64>>) -> Result<Self, ApiError> {
        let root = data_dir.join(SESSIONS_DIR);
        std::fs::create_dir_all(&root)?;
        let mut sessions = HashMap::new();
        let mut max_id = 0;
        for entry in std::fs::read_dir(&root)? {
            let dir = entry?.path();
            if !dir.is_dir() {
                continue;
            }
            let session = match load_session(&dir) {
                Ok(s) => s,
                Err(e) => {
                    tracing::warn!(dir = %dir.display(), error = %e, "skipping unreadable session");
                    continue;
                }
            };
            max_id = max_id.max(parse_id(&session.id).unwrap_or(0));
            let mut e = Entry {
                log: EventLog::open(&dir)?,
                session,
                renderer: None,
            };
            if e.session.state == SessionState::Capturing {
                let (frames, done) = (e.session.capture.frames, e.session.capture.done);
                e.commit(Event::CaptureFailed {
                    message: "interrupted by a service restart".into(),
                    frames,
                    done,
                })?;
            }
            sessions.insert(e.session.id.clone(), Arc::new(Mutex::new(e)));
        }
        tracing::info!(count = sessions.len(), dir = %data_dir.display(), "sessions loaded");
        Ok(Self {
            inner: Arc::new(Inner {
                data_dir: data_dir.to_path_buf(),
                default_bundle,
                sessions: RwLock::new(sessions),
                next_id: AtomicU64::new(max_id + 1),
            }),
        })
    }

    pub fn session_dir(&self, id: &str) -> PathBuf {
        self.inner.data_dir.join(SESSIONS_DIR).join(id)
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.inner
            .sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }
}

fn parse_id(id: &str) -> Option<u64> {
    id.strip_prefix('s')?.parse().ok()
}

fn lock(shared: &Shared) -> std::sync::MutexGuard<'_, Entry> {
    // A panic inside a handler leaves the entry consistent because every
    // mutation goes through `commit`, so a poisoned lock is still usable.
    shared.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/samples", post(post_samples))
        .route("/sessions/{id}/trajectory", axum::routing::delete(clear_trajectory))
        .route(
            "/sessions/{id}/annotations",
            post(post_annotation).get(list_annotations),
        )
        .route("/sessions/{id}/capture", post(start_capture))
        .route("/sessions/{id}/capture/status", get(capture_status))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/frames/latest", get(latest_frame))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "no_route", "no such endpoint") })
        .with_state(state)
}

/// Runs blocking session work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    labels: Vec<String>,
    #[serde(default)]
    name: String,
    #[serde(default)]
    bundle: Option<CalibrationBundle<f64>>,
    #[serde(default)]
    scenario: Option<Scenario>,
    #[serde(default)]
    tip_offset: Option<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub name: String,
    pub state: SessionState,
    pub labels: Vec<String>,
    pub trajectory_length: usize,
    pub annotations: usize,
    pub capture: CaptureStatus,
}

impl From<&Session> for SessionSummary {
    fn from(s: &Session) -> Self {
        Self {
            id: s.id.clone(),
            name: s.config.name.clone(),
            state: s.state,
            labels: s.config.labels.clone(),
            trajectory_length: s.trajectory.len(),
            annotations: s.annotations.len(),
            capture: s.capture.clone(),
        }
    }
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateRequest = parse_json(&body)?;
    let scenario = req.scenario.unwrap_or_default();
    let bundle = req
        .bundle
        .or_else(|| state.inner.default_bundle.clone())
        .unwrap_or_else(|| scenario.rig.bundle());
    let config = SessionConfig {
        name: req.name,
        labels: req.labels,
        bundle,
        scenario,
        tip_offset: req.tip_offset.unwrap_or_else(default_tip_offset),
    };
    config.validate()?;
    let id = format!("s{:06}", state.inner.next_id.fetch_add(1, Ordering::SeqCst));
    let event = Event::Created { id: id.clone(), config };
    let session = Session::create(&event)?;
    let mut log = EventLog::create(&state.session_dir(&id))?;
    log.append(&event)?;
    let summary = SessionSummary::from(&session);
    let entry = Entry {
        session,
        log,
        renderer: None,
    };
    state
        .inner
        .sessions
        .write()
        .expect("session map lock")
        .insert(id, Arc::new(Mutex::new(entry)));
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn get_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionSummary>, ApiError> {
    let shared = state.get(&id)?;
    let e = lock(&shared);
    Ok(Json(SessionSummary::from(&e.session)))
}

/// Accepts a JSON array, a single object, or JSON lines.
fn parse_samples(body: &[u8]) -> Result<Vec<SampleInput>, ApiError> {
    let text = std::str::from_utf8(body).map_err(|_| ApiError::malformed("body is not UTF-8"))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return parse_json(trimmed.as_bytes());
    }
    let mut items = Vec::new();
    let stream = serde_json::Deserializer::from_str(text).into_iter::<SampleInput>();
    for item in stream {
        match item {
            Ok(s) => items.push(s),
            Err(e) => return Err(ApiError::malformed(format!("sample {}: {e}", items.len()))),
        }
    }
    if items.is_empty() {
        return Err(ApiError::malformed("no samples in body"));
    }
    Ok(items)
}

async fn post_samples(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<SampleOutcome>), ApiError> {
    let shared = state.get(&id)?;
    let items = parse_samples(&body)?;
    let outcome = blocking(move || {
        let mut e = lock(&shared);
        let mut next = e.session.clone();
        let outcome = next.ingest(&items)?;
        e.log.append(&Event::Samples { items })?;
        e.session = next;
        Ok(outcome)
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(outcome)))
}

async fn clear_trajectory(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<StatusCode, ApiError> {
    let shared = state.get(&id)?;
    lock(&shared).commit(Event::TrajectoryCleared)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRequest {
    kind: String,
    label: String,
    #[serde(default)]
    epsilon_mm: Option<f64>,
}

async fn post_annotation(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<Annotation>), ApiError> {
    let shared = state.get(&id)?;
    let req: AnnotationRequest = parse_json(&body)?;
    let kind: ShapeKind = req.kind.parse().map_err(ApiError::malformed)?;
    let annotation = blocking(move || {
        let mut e = lock(&shared);
        let a = e.session.finalize(kind, &req.label, req.epsilon_mm)?;
        e.commit(Event::Annotated { annotation: a.clone() })?;
        Ok(a)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(annotation)))
}

async fn list_annotations(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Vec<Annotation>>, ApiError> {
    let shared = state.get(&id)?;
    let e = lock(&shared);
    Ok(Json(e.session.annotations.clone()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptureRequest {
    frames: FrameSource,
}

async fn start_capture(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<CaptureStatus>), ApiError> {
    let shared = state.get(&id)?;
    let req: CaptureRequest = parse_json(&body)?;
    let source = req.frames;
    let (snapshot, renderer, frames_dir) = {
        let mut e = lock(&shared);
        e.session.check_capture(&source)?;
        capture_scene(&e.session.config.scenario, &source)?;
        let renderer = match source {
            FrameSource::Sim { .. } => Some(e.renderer()?),
            FrameSource::Directory { .. } => None,
        };
        e.commit(Event::CaptureStarted { source: source.clone() })?;
        (e.session.clone(), renderer, e.log.frames_dir())
    };
    let status = snapshot.capture.clone();
    let worker = shared.clone();
    tokio::task::spawn_blocking(move || {
        let n = snapshot.annotations.len();
        let mut progress = |frames: usize, propagated: usize| {
            let mut e = lock(&worker);
            e.session.capture.frames = frames;
            if matches!(source, FrameSource::Directory { .. }) {
                e.session.capture.total = frames + n;
            }
            e.session.capture.done = frames + propagated;
        };
        let outcome = run_capture(&snapshot, &source, renderer, &frames_dir, &mut progress);
        let mut e = lock(&worker);
        let event = match outcome {
            Ok(result) => Event::CaptureFinished { result },
            Err(err) => Event::CaptureFailed {
                message: err.message,
                frames: e.session.capture.frames,
                done: e.session.capture.done,
            },
        };
        if let Err(err) = e.commit(event) {
            tracing::error!(error = %err, "could not record capture outcome");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(status)))
}

async fn capture_status(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<CaptureStatus>, ApiError> {
    let shared = state.get(&id)?;
    let e = lock(&shared);
    Ok(Json(e.session.capture.clone()))
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
    #[serde(default)]
    images: bool,
}

async fn export(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let shared = state.get(&id)?;
    let format: ExportFormat = q
        .format
        .as_deref()
        .unwrap_or("json")
        .parse()
        .map_err(ApiError::malformed)?;
    let bytes = blocking(move || {
        let mut e = lock(&shared);
        let dir = e.log.frames_dir();
        if q.images && e.session.result.is_none() && !e.session.annotations.is_empty() {
            // The reference view is rendered on demand before any capture.
            let path = dir.join(sequence_file_name(REFERENCE_FRAME));
            if !path.exists() {
                std::fs::create_dir_all(&dir)?;
                let r = e.renderer()?;
                frame_image(&e.session, &dir, REFERENCE_FRAME, &r, None)?.write_pgm(&path)?;
            }
        }
        session_archive(&e.session, format, q.images.then_some(dir.as_path()))
    })
    .await?;
    let name = format!(
        "attachment; filename=\"{id}-{}.tar\"",
        q.format.as_deref().unwrap_or("json")
    );
    Ok((
        StatusCode::OK,
        [
            (header::CONTENT_TYPE, "application/x-tar".to_string()),
            (header::CONTENT_DISPOSITION, name),
        ],
        bytes,
    )
        .into_response())
}

#[derive(Deserialize)]
struct FrameQuery {
    encoding: Option<String>,
}

/// Current camera view plus what the UI overlays on it.
#[derive(Serialize, Deserialize)]
pub struct FrameView {
    pub frame_index: u64,
    pub width: u32,
    pub height: u32,
    /// `png` or `pgm`.
    pub encoding: String,
    /// Base64 image bytes.
    pub image: String,
    pub state: SessionState,
    /// Live trajectory in camera pixels.
    pub trajectory: Vec<Pixel<f64>>,
    /// Latest projector pixel lighting the tip.
    pub overlay: Option<Pixel<f64>>,
    pub annotations: Vec<Annotation>,
}

async fn latest_frame(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<FrameQuery>,
) -> Result<Json<FrameView>, ApiError> {
    let shared = state.get(&id)?;
    let encoding = q.encoding.unwrap_or_else(|| "png".into());
    if encoding != "png" && encoding != "pgm" {
        return Err(ApiError::malformed(format!("unknown encoding `{encoding}`")));
    }
    blocking(move || {
        let mut e = lock(&shared);
        let dir = e.log.frames_dir();
        let index = match (&e.session.result, e.session.capture.frames) {
            (Some(r), _) => *r.frames.last().unwrap_or(&REFERENCE_FRAME),
            (None, n) if n > 0 => REFERENCE_FRAME + n as u64 - 1,
            _ => REFERENCE_FRAME,
        };
        let renderer = e.renderer()?;
        let tip = match e.session.state {
            SessionState::Annotating => e.session.latest_tip(),
            _ => None,
        };
        let frame = frame_image(&e.session, &dir, index, &renderer, tip.as_ref())?;
        let bytes = if encoding == "png" {
            frame.to_png()
        } else {
            frame.to_pgm()
        };
        Ok(Json(FrameView {
            frame_index: index,
            width: frame.width(),
            height: frame.height(),
            encoding,
            image: base64::engine::general_purpose::STANDARD.encode(bytes),
            state: e.session.state,
            trajectory: e.session.trajectory_in_camera(),
            overlay: e.session.overlay.last().copied(),
            annotations: e.session.annotations_on(index),
        }))
    })
    .await
}
