use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use cbr_core::{Error, ErrorClass};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    IllegalState,
    ValidationFailed,
    IoError,
    Unauthorized,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::IllegalState => StatusCode::CONFLICT,
            ErrorCode::ValidationFailed => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::IoError => StatusCode::INTERNAL_SERVER_ERROR,
            ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
        }
    }
}

impl From<ErrorClass> for ErrorCode {
    fn from(class: ErrorClass) -> Self {
        match class {
            ErrorClass::BadRequest => ErrorCode::BadRequest,
            ErrorClass::NotFound => ErrorCode::NotFound,
            ErrorClass::IllegalState => ErrorCode::IllegalState,
            ErrorClass::Validation => ErrorCode::ValidationFailed,
            ErrorClass::Io => ErrorCode::IoError,
        }
    }
}

/// Error body returned by every endpoint.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let detail = match &err {
            Error::Validation { report, .. } => serde_json::to_value(report).ok(),
            Error::IllegalState { state, operation } => Some(serde_json::json!({
                "state": state,
                "operation": operation,
            })),
            _ => None,
        };
        Self {
            code: err.class().into(),
            message: err.to_string(),
            detail,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cbr_core::{Operation, SessionState};

    #[test]
    fn engine_errors_map_to_codes() {
        let cases = [
            (Error::EmptyCaseBase, ErrorCode::ValidationFailed, 422),
            (Error::ZeroK, ErrorCode::BadRequest, 400),
            (
                Error::NotFound {
                    what: "case base",
                    id: "x".into(),
                },
                ErrorCode::NotFound,
                404,
            ),
            (
                Error::IllegalState {
                    state: SessionState::Created,
                    operation: Operation::Retain,
                },
                ErrorCode::IllegalState,
                409,
            ),
        ];
        for (err, code, status) in cases {
            let api = ApiError::from(err);
            assert_eq!(api.code, code);
            assert_eq!(api.code.status().as_u16(), status);
        }
    }

    #[test]
    fn wire_form() {
        let body = serde_json::to_value(ApiError::from(Error::NoLabeledNeighbors)).unwrap();
        assert_eq!(
            body,
            serde_json::json!({"code": "validation_failed", "message": "no labeled neighbors"})
        );
    }
}
