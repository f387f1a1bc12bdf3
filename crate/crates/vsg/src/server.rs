//! HTTP and WebSocket front end for live capture sessions.
//!
//! | Method | Path | Body |
//! |---|---|---|
//! | POST | `/v1/session` | `{"scene"?: name or scene object, "interactive"?: bool}` |
//! | POST | `/v1/session/{id}/keyframe` | [`KeyframeRequest`] |
//! | POST | `/v1/session/{id}/pose` | [`PoseRequest`] |
//! | GET | `/v1/session/{id}/state` | |
//! | GET (upgrade) | `/v1/session/{id}/events` | |
//!
//! Errors are `{"error": message}` with status 400 (malformed), 404 (unknown
//! session), 409 (ordering or conflicting duplicate) or 500 (detector
//! failure, with `frame_index` echoed).

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::broadcast;
use vsg_core::detection::{Detection, Detector, SyntheticDetector};
use vsg_core::frame::CameraFrame;
use vsg_core::scoring::PriorTable;
use vsg_core::session::{CaptureSession, IngestReport, Pipeline, SessionConfig, SessionEvent};
use vsg_core::sim::{render_frame, Scene};
use vsg_core::state::StateSnapshot;
use vsg_core::{Intrinsics, Pose};

use crate::dataset::{decode_depth, decode_rgb};
use crate::error::{Error, Result};
use crate::runner::{render_intrinsics, session_config};

/// Version tag carried by every state message.
pub const SCHEMA_VERSION: u32 = 1;
pub const BIND_ENV: &str = "VSG_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const SKIPPED_STATUS: &str = "below capture cadence, skipped";
const BODY_LIMIT: usize = 64 << 20;
const STREAM_CAPACITY: usize = 4096;

pub type DetectorFactory = dyn Fn(&Scene) -> Box<dyn Detector + Send> + Send + Sync;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub scene: Option<SceneRef>,
    #[serde(default)]
    pub interactive: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum SceneRef {
    Name(String),
    Inline(Box<Scene>),
}

#[derive(Debug, Serialize)]
pub struct CreateResponse {
    pub id: String,
    pub schema_version: u32,
    pub interactive: bool,
    pub config: SessionConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeRequest {
    pub frame_index: usize,
    pub timestamp: f64,
    pub width: u32,
    pub height: u32,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    /// Base64 of `width * height` RGB8 triples, row-major.
    pub image_b64: String,
    /// Base64 of `width * height` little-endian f32 depths, row-major.
    pub depth_b64: String,
}

impl KeyframeRequest {
    pub fn from_frame(frame_index: usize, frame: &CameraFrame) -> Self {
        let b64 = base64::engine::general_purpose::STANDARD;
        let rgb: Vec<u8> = frame.rgb.as_slice().iter().flatten().copied().collect();
        Self {
            frame_index,
            timestamp: frame.timestamp,
            width: frame.rgb.width(),
            height: frame.rgb.height(),
            intrinsics: frame.intrinsics,
            pose: frame.pose,
            image_b64: b64.encode(rgb),
            depth_b64: b64.encode(crate::dataset::encode_depth(frame)),
        }
    }

    fn into_frame(self) -> std::result::Result<CameraFrame, String> {
        let b64 = base64::engine::general_purpose::STANDARD;
        if (self.width, self.height) != (self.intrinsics.width(), self.intrinsics.height()) {
            return Err("width/height differ from intrinsics".into());
        }
        let rgb = b64.decode(&self.image_b64).map_err(|e| format!("image_b64: {e}"))?;
        let rgb = decode_rgb(&rgb, self.width, self.height).ok_or("image payload size does not match width*height*3")?;
        let depth = b64.decode(&self.depth_b64).map_err(|e| format!("depth_b64: {e}"))?;
        let depth = decode_depth(&depth, self.width, self.height).ok_or("depth payload size does not match width*height*4")?;
        CameraFrame::new(rgb, depth, self.intrinsics, self.pose, self.timestamp).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Serialize)]
pub struct DetectionReply {
    #[serde(flatten)]
    pub detection: Detection,
    pub score: Option<f64>,
    pub complex: bool,
    pub sphere_id: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct KeyframeResponse {
    pub frame_index: usize,
    pub detections: Vec<DetectionReply>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRequest {
    pub timestamp: f64,
    pub pose: Pose,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PoseAck {
    pub accepted: bool,
    pub frame_index: Option<usize>,
    pub keyframe: bool,
    pub status: String,
}

/// Full state message: sent on subscribe and by `GET /state`. `seq` is the
/// number of events folded in; the next delta carries that `seq`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StateMessage {
    pub schema_version: u32,
    pub seq: u64,
    pub state: StateSnapshot,
}

/// One event in ingestion order; `seq` is its index in the session log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DeltaMessage {
    pub seq: u64,
    pub event: SessionEvent,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamMessage {
    Snapshot(StateMessage),
    Delta(DeltaMessage),
}

struct CachedReply {
    digest: [u8; 32],
    status: StatusCode,
    body: Bytes,
}

struct Live {
    scene: Scene,
    detector: Box<dyn Detector + Send>,
    session: CaptureSession,
    interactive: bool,
    replies: HashMap<usize, CachedReply>,
    stream: broadcast::Sender<DeltaMessage>,
}

impl Live {
    fn state(&self) -> StateMessage {
        StateMessage {
            schema_version: SCHEMA_VERSION,
            seq: self.session.events().len() as u64,
            state: StateSnapshot::from_session(&self.session),
        }
    }

    fn publish(&self, report: &IngestReport) {
        let first = self.session.events().len() - report.events.len();
        for (i, event) in report.events.iter().enumerate() {
            // no subscribers is not an error
            let _ = self.stream.send(DeltaMessage {
                seq: (first + i) as u64,
                event: event.clone(),
            });
        }
    }
}

struct Shared {
    table: PriorTable,
    detectors: Box<DetectorFactory>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Live>>>>,
    next_id: AtomicU64,
}

/// Shared server state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl AppState {
    /// Sessions use the synthetic detector on their scene.
    pub fn new(table: PriorTable) -> Self {
        Self::with_detectors(table, Box::new(|scene: &Scene| Box::new(SyntheticDetector::new(scene.clone()))))
    }

    pub fn with_detectors(table: PriorTable, detectors: Box<DetectorFactory>) -> Self {
        Self(Arc::new(Shared {
            table,
            detectors,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }))
    }

    fn session(&self, id: &str) -> std::result::Result<Arc<Mutex<Live>>, ApiError> {
        lock(&self.0.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id:?}")))
    }

    /// Ids of live sessions, sorted.
    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = lock(&self.0.sessions).keys().cloned().collect();
        ids.sort_by_key(|id| (id.len(), id.clone()));
        ids
    }

    /// Binary snapshot of one session.
    pub fn snapshot(&self, id: &str) -> Option<Vec<u8>> {
        let live = lock(&self.0.sessions).get(id).cloned()?;
        let live = lock(&live);
        Some(crate::snapshot::snapshot(&live.session))
    }

    /// Write `<dir>/<id>.vsgsnap` for every session; returns the paths.
    pub fn flush_snapshots(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for id in self.session_ids() {
            if let Some(bytes) = self.snapshot(&id) {
                let path = dir.join(format!("{id}.vsgsnap"));
                std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    frame_index: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            frame_index: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn body(&self) -> Bytes {
        let mut v = serde_json::json!({ "error": self.message });
        if let Some(i) = self.frame_index {
            v["frame_index"] = i.into();
        }
        Bytes::from(v.to_string())
    }

    fn from_core(e: vsg_core::Error) -> Self {
        let status = match e {
            vsg_core::Error::Ordering { .. } => StatusCode::CONFLICT,
            vsg_core::Error::Detector(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, self.body())
    }
}

fn json_response(status: StatusCode, body: Bytes) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn json_ok<T: Serialize>(value: &T) -> Response {
    json_response(StatusCode::OK, Bytes::from(serde_json::to_vec(value).expect("response serializes")))
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> std::result::Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/session", post(create_session))
        .route("/v1/session/{id}/keyframe", post(keyframe))
        .route("/v1/session/{id}/pose", post(pose))
        .route("/v1/session/{id}/state", get(get_state))
        .route("/v1/session/{id}/events", get(events))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> std::result::Result<Response, ApiError> {
    let req: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest::default()
    } else {
        parse(&body)?
    };
    let scene = match req.scene {
        None => crate::bundled::desk_scene(),
        Some(SceneRef::Name(name)) => crate::bundled::scene(&name)
            .ok_or_else(|| ApiError::bad_request(format!("no bundled scene named {name:?}")))?,
        Some(SceneRef::Inline(scene)) => *scene,
    };
    let config = session_config(&scene);
    let session = CaptureSession::new(config.clone()).map_err(ApiError::from_core)?;
    let interactive = req.interactive.unwrap_or(true);
    let id = format!("s{}", app.0.next_id.fetch_add(1, Ordering::Relaxed));
    let live = Live {
        detector: (app.0.detectors)(&scene),
        scene,
        session,
        interactive,
        replies: HashMap::new(),
        stream: broadcast::channel(STREAM_CAPACITY).0,
    };
    lock(&app.0.sessions).insert(id.clone(), Arc::new(Mutex::new(live)));
    log::info!("created session {id}");
    Ok(json_ok(&CreateResponse {
        id,
        schema_version: SCHEMA_VERSION,
        interactive,
        config,
    }))
}

fn handle_keyframe(app: &AppState, live: &Mutex<Live>, body: &[u8]) -> std::result::Result<Response, ApiError> {
    let req: KeyframeRequest = parse(body)?;
    let digest: [u8; 32] = Sha256::digest(body).into();
    let mut live = lock(live);
    if let Some(cached) = live.replies.get(&req.frame_index) {
        if cached.digest != digest {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("frame_index {} was already submitted with different content", req.frame_index),
            ));
        }
        return Ok(json_response(cached.status, cached.body.clone()));
    }
    let frame_index = req.frame_index;
    let frame = req.into_frame().map_err(ApiError::bad_request)?;
    let live = &mut *live;
    let pipeline = Pipeline {
        detector: live.detector.as_ref(),
        table: &app.0.table,
    };
    let report = live.session.ingest_keyframe(&frame, pipeline).map_err(ApiError::from_core)?;
    live.publish(&report);
    let failure = report.events.iter().find_map(|e| match e {
        SessionEvent::DetectionSkipped {
            category: None, reason, ..
        } => Some(reason.clone()),
        _ => None,
    });
    let (status, body) = match failure {
        Some(reason) => {
            let err = ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                message: reason,
                frame_index: Some(frame_index),
            };
            (err.status, err.body())
        }
        None => {
            let reply = KeyframeResponse {
                frame_index,
                detections: report
                    .detections
                    .into_iter()
                    .map(|d| DetectionReply {
                        detection: d.detection,
                        score: d.score,
                        complex: d.complex,
                        sphere_id: d.sphere_id,
                    })
                    .collect(),
            };
            (StatusCode::OK, Bytes::from(serde_json::to_vec(&reply).expect("response serializes")))
        }
    };
    live.replies.insert(
        frame_index,
        CachedReply {
            digest,
            status,
            body: body.clone(),
        },
    );
    Ok(json_response(status, body))
}

async fn keyframe(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> std::result::Result<Response, ApiError> {
    let live = app.session(&id)?;
    tokio::task::spawn_blocking(move || handle_keyframe(&app, &live, &body))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

fn handle_pose(app: &AppState, live: &Mutex<Live>, body: &[u8]) -> std::result::Result<Response, ApiError> {
    let req: PoseRequest = parse(body)?;
    let mut live = lock(live);
    if !live.interactive {
        return Err(ApiError::new(StatusCode::CONFLICT, "session is not interactive"));
    }
    let frame = render_frame(&live.scene, &req.pose, &render_intrinsics(), req.timestamp);
    let live = &mut *live;
    let pipeline = Pipeline {
        detector: live.detector.as_ref(),
        table: &app.0.table,
    };
    let report = live.session.ingest(&frame, pipeline).map_err(ApiError::from_core)?;
    live.publish(&report);
    Ok(json_ok(&PoseAck {
        accepted: report.accepted,
        frame_index: report.frame_index,
        keyframe: report.keyframe,
        status: if report.accepted { "ingested" } else { SKIPPED_STATUS }.into(),
    }))
}

async fn pose(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> std::result::Result<Response, ApiError> {
    let live = app.session(&id)?;
    tokio::task::spawn_blocking(move || handle_pose(&app, &live, &body))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn get_state(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> std::result::Result<Response, ApiError> {
    let live = app.session(&id)?;
    let state = lock(&live).state();
    Ok(json_ok(&state))
}

async fn events(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    ws: std::result::Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> std::result::Result<Response, ApiError> {
    let live = app.session(&id)?;
    match ws {
        Ok(ws) => Ok(ws.on_upgrade(move |socket| stream_events(socket, live))),
        Err(rejection) => Ok(rejection.into_response()),
    }
}

async fn stream_events(mut socket: WebSocket, live: Arc<Mutex<Live>>) {
    // subscribe under the lock so no event falls between snapshot and stream
    let (first, mut rx) = {
        let live = lock(&live);
        (live.state(), live.stream.subscribe())
    };
    let encode = |msg: StreamMessage| Message::Text(serde_json::to_string(&msg).expect("message serializes").into());
    if socket.send(encode(StreamMessage::Snapshot(first))).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            delta = rx.recv() => match delta {
                Ok(delta) => {
                    if socket.send(encode(StreamMessage::Delta(delta))).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("subscriber lagged by {n} events, closing");
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
