use std::collections::HashMap;
use std::sync::{Arc, Mutex as StdMutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use covillm_core::executor::ExecutionEvent;
use covillm_core::frame::FrameError;
use covillm_core::localization::export_json;
use covillm_core::pipeline::Workbench;
use covillm_core::planner::{ChatCompletionsBackend, InstructionRequest, PlannerBackend};
use covillm_core::scene::synthesize_frame;
use covillm_core::{DepthFrame, SceneSpec};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{broadcast, Mutex};

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::events;
use crate::session::{Phase, Session, Source, StepOutcome};
use crate::store::{Store, StoreError};

/// Largest accepted request body; a 640x480 frame is about 600 KB.
const BODY_LIMIT: usize = 16 * 1024 * 1024;

/// Broadcast to live event-stream subscribers after every committed change.
#[derive(Debug, Clone)]
pub(crate) enum Notice {
    Event { index: usize, event: ExecutionEvent },
    Phase(Phase),
}

pub(crate) struct Handle {
    pub(crate) session: Mutex<Session>,
    pub(crate) notices: broadcast::Sender<Notice>,
}

struct Inner {
    wb: Workbench,
    store: Store,
    backend: Result<Arc<dyn PlannerBackend>, String>,
    sessions: StdMutex<HashMap<String, Arc<Handle>>>,
}

/// Shared service state. Sessions are loaded from the store on first use,
/// so a fresh process picks up where a killed one stopped.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// `backend` is either a planner or the reason llm mode is unavailable.
    pub fn new(
        wb: Workbench,
        store: Store,
        backend: Result<Arc<dyn PlannerBackend>, String>,
    ) -> Self {
        Self {
            inner: Arc::new(Inner {
                wb,
                store,
                backend,
                sessions: StdMutex::new(HashMap::new()),
            }),
        }
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, crate::ServiceError> {
        let wb = config.workbench()?;
        let store = Store::open(&config.data_dir)?;
        let backend = ChatCompletionsBackend::from_env(config.backend.clone().unwrap_or_default())
            .map(|b| Arc::new(b) as Arc<dyn PlannerBackend>)
            .map_err(|e| e.to_string());
        if let Err(why) = &backend {
            log::warn!("llm planning disabled: {why}");
        }
        Ok(Self::new(wb, store, backend))
    }

    pub fn workbench(&self) -> &Workbench {
        &self.inner.wb
    }

    pub(crate) async fn handle(&self, id: &str) -> Result<Arc<Handle>, ApiError> {
        if uuid::Uuid::parse_str(id).is_err() {
            return Err(ApiError::not_found(id));
        }
        if let Some(h) = self
            .inner
            .sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
        {
            return Ok(h.clone());
        }
        let store = self.inner.store.clone();
        let key = id.to_string();
        let loaded = tokio::task::spawn_blocking(move || store.load(&key))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        let session = loaded.ok_or_else(|| ApiError::not_found(id))?;
        let mut map = self.inner.sessions.lock().expect("session map poisoned");
        Ok(map
            .entry(id.to_string())
            .or_insert_with(|| new_handle(session))
            .clone())
    }

    /// Applies `op` to a copy of the session on a blocking thread. On
    /// success the copy is persisted, then swapped in, and subscribers are
    /// told about new events and phase changes. On failure nothing changes.
    pub(crate) async fn mutate<T, F>(&self, handle: &Handle, op: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(
                &mut Session,
                &Workbench,
                &Store,
                Result<&dyn PlannerBackend, &str>,
            ) -> Result<T, ApiError>
            + Send
            + 'static,
    {
        let mut guard = handle.session.lock().await;
        let before = guard.clone();
        let inner = self.inner.clone();
        let (after, value) = tokio::task::spawn_blocking(move || {
            let mut draft = before.clone();
            let backend = inner
                .backend
                .as_ref()
                .map(|b| b.as_ref())
                .map_err(String::as_str);
            let value = op(&mut draft, &inner.wb, &inner.store, backend)?;
            if draft != before {
                debug_assert!(
                    before.phase.may_become(draft.phase),
                    "{} -> {}",
                    before.phase,
                    draft.phase
                );
                inner.store.save(&draft)?;
            }
            Ok::<_, ApiError>((draft, value))
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;

        let (old_len, old_phase) = (guard.events.len(), guard.phase);
        for (index, event) in after.events.iter().enumerate().skip(old_len) {
            let _ = handle.notices.send(Notice::Event {
                index,
                event: event.clone(),
            });
        }
        if after.phase != old_phase {
            let _ = handle.notices.send(Notice::Phase(after.phase));
        }
        *guard = after;
        Ok(value)
    }

    pub(crate) async fn step(&self, handle: &Handle) -> Result<StepOutcome, ApiError> {
        self.mutate(handle, |s, wb, _, _| Ok(s.step(wb)?)).await
    }

    async fn create(&self, source: Source, frame: DepthFrame) -> Result<Session, ApiError> {
        let id = uuid::Uuid::new_v4().to_string();
        let session = Session::new(id.clone(), source, &frame, self.inner.wb.board.clone());
        let (store, snapshot) = (self.inner.store.clone(), session.clone());
        tokio::task::spawn_blocking(move || {
            store.save_frame(&id, &frame)?;
            store.save(&snapshot)
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
        self.inner
            .sessions
            .lock()
            .expect("session map poisoned")
            .insert(session.id.clone(), new_handle(session.clone()));
        Ok(session)
    }
}

fn new_handle(session: Session) -> Arc<Handle> {
    Arc::new(Handle {
        session: Mutex::new(session),
        notices: broadcast::channel(256).0,
    })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/frame", get(get_frame))
        .route("/v1/sessions/{id}/localize", post(localize))
        .route("/v1/sessions/{id}/classify", post(classify))
        .route("/v1/sessions/{id}/plan", post(plan))
        .route("/v1/sessions/{id}/step", post(step))
        .route("/v1/sessions/{id}/events", get(events::stream))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

fn is_content_type(headers: &HeaderMap, expected: &str) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| {
            v.split(';')
                .next()
                .unwrap_or("")
                .trim()
                .eq_ignore_ascii_case(expected)
        })
}

#[derive(Debug, Deserialize)]
struct CreateQuery {
    #[serde(default)]
    seed: u64,
}

/// Accepts either a JSON scene description, synthesized with the configured
/// camera, or a raw frame file (`application/octet-stream`).
async fn create_session(
    State(state): State<AppState>,
    Query(query): Query<CreateQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let camera = state.inner.wb.camera;
    let (source, frame) = if is_content_type(&headers, "application/octet-stream") {
        let frame = DepthFrame::from_bytes(&body).map_err(|e| {
            let message = match e {
                FrameError::BadHeader(_) => e.to_string(),
                other => format!("bad frame header: {other}"),
            };
            ApiError::bad_request("bad_frame", message)
        })?;
        if (frame.width(), frame.height()) != (camera.width, camera.height) {
            return Err(ApiError::bad_request(
                "frame_size",
                format!(
                    "frame is {}x{} but the camera is {}x{}",
                    frame.width(),
                    frame.height(),
                    camera.width,
                    camera.height
                ),
            ));
        }
        (Source::Upload, frame)
    } else {
        let scene: SceneSpec = serde_json::from_slice(&body)
            .map_err(|e| ApiError::bad_request("invalid_scene", e.to_string()))?;
        let seed = query.seed;
        let (scene, frame) = tokio::task::spawn_blocking(move || {
            let frame = synthesize_frame(&scene, &camera, seed);
            (scene, frame)
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
        let frame = frame.map_err(|e| ApiError::bad_request("invalid_scene", e.to_string()))?;
        (Source::Scene { scene, seed }, frame)
    };
    let session = state.create(source, frame).await?;
    log::info!("created session {}", session.id);
    let location = format!("/v1/sessions/{}", session.id);
    let body = json!({
        "id": session.id,
        "phase": session.phase,
        "frame_width": session.frame_width,
        "frame_height": session.frame_height,
    });
    Ok((
        StatusCode::CREATED,
        [(header::LOCATION, location)],
        Json(body),
    )
        .into_response())
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Session>, ApiError> {
    let handle = state.handle(&id).await?;
    let session = handle.session.lock().await.clone();
    Ok(Json(session))
}

async fn get_frame(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    state.handle(&id).await?;
    let store = state.inner.store.clone();
    let bytes = tokio::task::spawn_blocking(move || store.frame_bytes(&id))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e: StoreError| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

async fn localize(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let handle = state.handle(&id).await?;
    let payload = state
        .mutate(&handle, |s, wb, store, _| {
            let frame = store.load_frame(&s.id)?;
            Ok(export_json(s.localize(wb, &frame)?))
        })
        .await?;
    Ok(Json(payload))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyBody {
    text: String,
}

/// Body is the statement text itself, or `{"text": "..."}` when sent as
/// JSON.
async fn classify(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let text = if is_content_type(&headers, "application/json") {
        serde_json::from_slice::<ClassifyBody>(&body)
            .map_err(|e| ApiError::bad_request("invalid_body", e.to_string()))?
            .text
    } else {
        String::from_utf8(body.to_vec())
            .map_err(|e| ApiError::bad_request("invalid_body", e.to_string()))?
    };
    let handle = state.handle(&id).await?;
    let result = state
        .mutate(&handle, move |s, wb, _, _| {
            Ok(s.classify(wb, &text)?.clone())
        })
        .await?;
    Ok(Json(result).into_response())
}

async fn plan(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: InstructionRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request("invalid_body", e.to_string()))?;
    let handle = state.handle(&id).await?;
    let record = state
        .mutate(&handle, move |s, wb, _, backend| {
            Ok(s.plan(wb, &req, backend)?.clone())
        })
        .await?;
    Ok(Json(record).into_response())
}

/// Runs one subtask. An infeasible step is committed (error event logged,
/// session failed) and reported as 422 with the outcome as detail.
async fn step(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let handle = state.handle(&id).await?;
    let outcome = state.step(&handle).await?;
    match &outcome.error {
        Some(message) => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "step_infeasible",
            message.clone(),
        )
        .with_detail(serde_json::to_value(&outcome).expect("outcome serializes"))),
        None => Ok(Json(outcome).into_response()),
    }
}
