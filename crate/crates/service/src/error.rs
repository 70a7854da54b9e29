use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use crate::bridge::BridgeError;

/// JSON error body: `{"error": {"kind", "message", "step"?}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error(transparent)]
    Core(#[from] wplus::Error),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown {kind} '{name}'")]
    NotFound { kind: &'static str, name: String },
    #[error("library could not be saved: {0}")]
    Persist(String),
}

impl ApiError {
    pub fn bad_request(msg: impl Into<String>) -> Self {
        ApiError::BadRequest(msg.into())
    }

    pub fn status(&self) -> StatusCode {
        use wplus::Error as E;
        match self {
            ApiError::Core(E::DuplicateName(_)) => StatusCode::CONFLICT,
            ApiError::Core(E::NotFound(_)) | ApiError::NotFound { .. } => StatusCode::NOT_FOUND,
            ApiError::Core(E::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ApiError::Core(E::Io(_)) | ApiError::Persist(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Core(_) | ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Bridge(e) => e.status(),
        }
    }

    pub fn kind(&self) -> String {
        match self {
            ApiError::Core(e) => core_kind(e).to_owned(),
            ApiError::Bridge(e) => e.kind().to_owned(),
            ApiError::BadRequest(_) => "bad_request".into(),
            ApiError::NotFound { .. } => "not_found".into(),
            ApiError::Persist(_) => "persist".into(),
        }
    }

    pub fn body(&self) -> ErrorBody {
        let step = match self {
            ApiError::Core(wplus::Error::AtStep { index, .. }) => Some(*index),
            _ => None,
        };
        ErrorBody {
            error: ErrorDetail {
                kind: self.kind(),
                message: self.to_string(),
                step,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            log::warn!("{self}");
        }
        (self.status(), Json(self.body())).into_response()
    }
}

/// Stable snake_case name for a core error variant.
pub fn core_kind(e: &wplus::Error) -> &'static str {
    use wplus::Error as E;
    match e {
        E::ZeroVector => "zero_vector",
        E::DimMismatch { .. } => "dim_mismatch",
        E::NonFinite(_) => "non_finite",
        E::InvalidShape(_) => "invalid_shape",
        E::MaskOutOfRange { .. } => "mask_out_of_range",
        E::EmptyDataset => "empty_dataset",
        E::ShapeMismatch(_) => "shape_mismatch",
        E::DegeneratePair(_) => "degenerate_pair",
        E::Image(_) => "image",
        E::EmptyInput => "empty_input",
        E::TooFew { .. } => "too_few",
        E::UnknownAttribute(_) => "unknown_attribute",
        E::BadStepCount(_) => "bad_step_count",
        E::AtStep { source, .. } => core_kind(source),
        E::TooFewStyles(_) => "too_few_styles",
        E::NearOrthogonalStyle { .. } => "near_orthogonal_style",
        E::LambdaOutOfRange { .. } => "lambda_out_of_range",
        E::BadEpsilon(_) => "bad_epsilon",
        E::BadRange(..) => "bad_range",
        E::NotConvex(_) => "not_convex",
        E::TooManyDirections { .. } => "too_many_directions",
        E::BadAttribute { .. } => "bad_attribute",
        E::BadMagic => "bad_magic",
        E::TruncatedPayload { .. } => "truncated_payload",
        E::UnsupportedVersion(_) => "unsupported_version",
        E::BadHeader(_) => "bad_header",
        E::UnsupportedDtype(_) => "unsupported_dtype",
        E::FortranOrderUnsupported => "fortran_order_unsupported",
        E::SchemaError(_) => "schema_error",
        E::DuplicateName(_) => "duplicate_name",
        E::NotFound(_) => "not_found",
        E::InvariantViolation { .. } => "invariant_violation",
        E::Io(_) => "io",
    }
}
