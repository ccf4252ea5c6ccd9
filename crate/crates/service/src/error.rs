use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use hydrotwin_core::Error;
use serde::Serialize;

/// Machine-readable failure codes. This set is closed; clients may match
/// on it exhaustively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidRequest,
    ParseError,
    NotFound,
    Conflict,
    ModelNotTrained,
    Infeasible,
    InsufficientHistory,
    Coverage,
    SizeGuard,
    EmptyDataset,
    IncompatibleSchema,
    MethodNotAllowed,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 13] = [
        ErrorCode::InvalidRequest,
        ErrorCode::ParseError,
        ErrorCode::NotFound,
        ErrorCode::Conflict,
        ErrorCode::ModelNotTrained,
        ErrorCode::Infeasible,
        ErrorCode::InsufficientHistory,
        ErrorCode::Coverage,
        ErrorCode::SizeGuard,
        ErrorCode::EmptyDataset,
        ErrorCode::IncompatibleSchema,
        ErrorCode::MethodNotAllowed,
        ErrorCode::Internal,
    ];

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::InvalidRequest | ErrorCode::ParseError => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict | ErrorCode::ModelNotTrained => StatusCode::CONFLICT,
            ErrorCode::Infeasible
            | ErrorCode::InsufficientHistory
            | ErrorCode::Coverage
            | ErrorCode::SizeGuard
            | ErrorCode::EmptyDataset
            | ErrorCode::IncompatibleSchema => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::InvalidRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::Dimension(_) | Error::Domain(_) | Error::NonFinite(_) | Error::Config(_) => ErrorCode::InvalidRequest,
            Error::Parse(_) => ErrorCode::ParseError,
            Error::InsufficientHistory { .. } => ErrorCode::InsufficientHistory,
            Error::Coverage(_) => ErrorCode::Coverage,
            Error::Infeasible(_) => ErrorCode::Infeasible,
            Error::SizeGuard(_) => ErrorCode::SizeGuard,
            Error::EmptyDataset(_) => ErrorCode::EmptyDataset,
            Error::Incompatible { .. } => ErrorCode::IncompatibleSchema,
            Error::NotFound(_) => ErrorCode::NotFound,
            Error::Conflict(_) => ErrorCode::Conflict,
            Error::Untrained => ErrorCode::ModelNotTrained,
            Error::Io(_) => ErrorCode::Internal,
        };
        Self::new(code, err.to_string())
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

    #[test]
    fn codes_serialize_snake_case() {
        let e = ApiError::from(Error::Untrained);
        let v = serde_json::to_value(&e).unwrap();
        assert_eq!(v["code"], "model_not_trained");
        assert_eq!(e.code.status(), StatusCode::CONFLICT);
    }

    #[test]
    fn every_failure_status_is_an_error() {
        for c in ErrorCode::ALL {
            assert!(c.status().is_client_error() || c.status().is_server_error());
        }
    }
}
