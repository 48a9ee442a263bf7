use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

/// JSON error body: `{"code": "...", "message": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", message)
    }

    pub fn malformed_bundle(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_bundle", message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, code, message)
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn no_model() -> Self {
        ApiError::conflict("model_not_loaded", "no composition model is loaded")
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<captain_core::Error> for ApiError {
    fn from(e: captain_core::Error) -> Self {
        use captain_core::Error as E;
        let message = e.to_string();
        match e {
            E::MalformedBundle(_) | E::DimensionMismatch(_) | E::ValueOutOfRange(_) | E::ZeroSaliency => {
                ApiError::malformed_bundle(message)
            }
            E::UnknownId(_) => ApiError::unprocessable("unknown_id", message),
            E::DuplicateId(_) => ApiError::unprocessable("duplicate_id", message),
            E::InvalidParameter(_) => ApiError::unprocessable("invalid_parameter", message),
            E::EmptyModel | E::ModelFormat(_) | E::EmptyCorpus => ApiError::conflict("model_unusable", message),
            E::Io { .. } => ApiError::internal(message),
            _ => ApiError::unprocessable("unprocessable", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

/// Failures while starting the service.
#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("loading model: {0}")]
    Model(#[source] captain_core::Error),
    #[error("opening corpus: {0}")]
    Corpus(#[source] captain_core::Error),
    #[error("session snapshot {path}: {message}")]
    Snapshot { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
