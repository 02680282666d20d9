use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ehazop_core::{FormatError, ModelError, SessionError};
use serde::Serialize;
use serde_json::{json, Value};

/// Error codes a client can branch on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    NotFound,
    ConflictDuplicateFinding,
    Validation,
    UnresolvedHazard,
    CorruptJournal,
    BadRequest,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::ConflictDuplicateFinding => StatusCode::CONFLICT,
            ErrorCode::Validation | ErrorCode::UnresolvedHazard => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::CorruptJournal => StatusCode::INTERNAL_SERVER_ERROR,
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
        }
    }
}

/// Body of every failed request: `{"code", "message", "details"}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(kind: &str, id: &str) -> Self {
        Self::new(ErrorCode::NotFound, format!("unknown {kind} `{id}`"))
            .with_details(json!({ "kind": kind, "id": id }))
    }
}

impl From<SessionError> for ApiError {
    fn from(err: SessionError) -> Self {
        let message = err.to_string();
        match err {
            SessionError::DuplicateFinding { existing, hazard } => {
                ApiError::new(ErrorCode::ConflictDuplicateFinding, message)
                    .with_details(json!({ "existing_finding": existing, "hazard": hazard }))
            }
            SessionError::UnresolvedHazard(hazard) => {
                ApiError::new(ErrorCode::UnresolvedHazard, message).with_details(json!({ "hazard": hazard }))
            }
            SessionError::UnknownCell(id) => {
                ApiError::new(ErrorCode::NotFound, message).with_details(json!({ "kind": "cell", "id": id }))
            }
            SessionError::UnknownFinding(id) => ApiError::new(ErrorCode::NotFound, message)
                .with_details(json!({ "kind": "finding", "id": id })),
            SessionError::UnknownTarget(id) => ApiError::new(ErrorCode::NotFound, message)
                .with_details(json!({ "kind": "target", "id": id })),
            SessionError::Model(ModelError::UnknownSubject(id)) => {
                ApiError::new(ErrorCode::NotFound, message)
                    .with_details(json!({ "kind": "subject", "id": id }))
            }
            SessionError::Model(_)
            | SessionError::Taxonomy(_)
            | SessionError::InvalidArgument(_)
            | SessionError::Closed => ApiError::new(ErrorCode::Validation, message),
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(err: ModelError) -> Self {
        SessionError::Model(err).into()
    }
}

impl From<FormatError> for ApiError {
    fn from(err: FormatError) -> Self {
        let message = err.to_string();
        match err {
            FormatError::Invalid(report) => ApiError::new(ErrorCode::Validation, message).with_details(
                json!({ "violations": report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>() }),
            ),
            FormatError::Model(e) => e.into(),
            FormatError::Parse { .. } | FormatError::UnsupportedVersion { .. } => {
                ApiError::bad_request(message)
            }
            FormatError::Taxonomy(_) | FormatError::Prompt(_) => {
                ApiError::new(ErrorCode::Validation, message)
            }
            FormatError::Replay(_)
            | FormatError::Io { .. }
            | FormatError::AlreadyExists(_)
            | FormatError::Locked(_) => ApiError::new(ErrorCode::CorruptJournal, message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}
