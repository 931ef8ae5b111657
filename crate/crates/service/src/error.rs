use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use insitu_core::annotate::AnnotateError;
use insitu_core::export::ExportError;
use insitu_core::flow::FlowError;
use insitu_core::geom::GeomError;
use insitu_core::raster::RasterError;
use insitu_core::sim::SimError;

/// Body of every non-success response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code,
            message: message.into(),
        }
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session `{id}`"))
    }

    pub fn invalid_state(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "invalid_state", message)
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_body", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = ErrorPayload {
            code: self.code.to_string(),
            message: self.message,
        };
        (status, Json(body)).into_response()
    }
}

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        let (status, code) = match &e {
            AnnotateError::OpenContour { .. } => (StatusCode::CONFLICT, "open_contour"),
            AnnotateError::TooFewPoints { .. } => (StatusCode::CONFLICT, "too_few_points"),
            AnnotateError::EmptyTrajectory => (StatusCode::CONFLICT, "empty_trajectory"),
            AnnotateError::DegenerateShape(_) => (StatusCode::CONFLICT, "degenerate_shape"),
            AnnotateError::StaleCalibration(_) => (StatusCode::CONFLICT, "stale_calibration"),
            AnnotateError::InvalidSample(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_sample"),
            AnnotateError::Geom(_) => (StatusCode::UNPROCESSABLE_ENTITY, "geometry"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<GeomError> for ApiError {
    fn from(e: GeomError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "geometry", e.to_string())
    }
}

impl From<ExportError> for ApiError {
    fn from(e: ExportError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "export", e.to_string())
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "scenario", e.to_string())
    }
}

impl From<FlowError> for ApiError {
    fn from(e: FlowError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "tracking", e.to_string())
    }
}

impl From<RasterError> for ApiError {
    fn from(e: RasterError) -> Self {
        Self::internal(e.to_string())
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        Self::internal(e.to_string())
    }
}
