use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use covillm_core::localization::LocalizationError;
use covillm_core::planner::{BackendError, PlanError};
use serde_json::{json, Value};

use crate::session::SessionError;
use crate::store::StoreError;

/// Error body shared by every endpoint: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "unknown_session",
            format!("no session {id:?}"),
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{} {}: {}", self.status, self.code, self.message);
        }
        let body = json!({ "code": self.code, "message": self.message, "detail": self.detail });
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::internal(e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::Conflict { action, phase } => {
                Self::new(StatusCode::CONFLICT, "phase_conflict", message)
                    .with_detail(json!({ "action": action, "phase": phase }))
            }
            SessionError::PlanComplete => Self::new(StatusCode::CONFLICT, "plan_complete", message),
            SessionError::AlreadyFailed(_) => {
                Self::new(StatusCode::CONFLICT, "session_failed", message)
            }
            SessionError::Localization(LocalizationError::SurfaceNotFound) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "surface_not_found",
                message,
            ),
            SessionError::Localization(_) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "localization_failed",
                message,
            ),
            SessionError::Classification(p) => Self::bad_request("classification_parse", message)
                .with_detail(json!({ "line": p.line, "text": p.text, "reason": p.reason })),
            SessionError::Geometry(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "geometry", message)
            }
            SessionError::Plan(PlanError::Backend(BackendError::MissingApiKey))
            | SessionError::NoBackend(_) => Self::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "backend_unavailable",
                message,
            ),
            SessionError::Plan(PlanError::Backend(_)) => {
                Self::new(StatusCode::BAD_GATEWAY, "backend_error", message)
            }
            SessionError::Plan(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "plan_rejected", message)
            }
        }
    }
}
