use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use flowforge::catalog::CatalogError;
use flowforge::model::ParseError;
use flowforge::orchestrator::OrchestratorError;
use flowforge::protocol::ProtocolError;

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                location: None,
            },
        }
    }

    pub fn at(mut self, location: impl Into<String>) -> Self {
        self.body.location = Some(location.into());
        self
    }

    pub fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", format!("no {what}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }

    /// A document in field `field` that does not parse.
    pub fn parse(field: &str, e: &ParseError) -> Self {
        let line = match e {
            ParseError::Syntax { line, column, .. } | ParseError::UnknownKey { line, column, .. } => {
                format!("{field}:{line}:{column}")
            }
            ParseError::DuplicateOrder { line, .. } => format!("{field}:{line}"),
        };
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "PARSE_ERROR", e.to_string()).at(line)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let msg = e.to_string();
        match e {
            OrchestratorError::EmptyRequirement => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "EMPTY_REQUIREMENT", msg).at("requirement")
            }
            OrchestratorError::InvalidPhase { .. } => Self::new(StatusCode::CONFLICT, "INVALID_PHASE", msg),
            OrchestratorError::Superseded(_) => Self::new(StatusCode::CONFLICT, "SUPERSEDED", msg),
            OrchestratorError::Cancelled => Self::new(StatusCode::CONFLICT, "CANCELLED", msg),
            OrchestratorError::GenerationFailed(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "GENERATION_FAILED", msg)
            }
            OrchestratorError::Context(ProtocolError::ForwardContext { .. }) => {
                Self::new(StatusCode::CONFLICT, "FORWARD_CONTEXT", msg).at("populated_prefix")
            }
            OrchestratorError::Context(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "BAD_TARGET", msg).at("target_order")
            }
        }
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::UnknownTable(_) | CatalogError::UnknownColumn { .. } => {
                Self::new(StatusCode::NOT_FOUND, "UNKNOWN_TABLE", e.to_string()).at("scope")
            }
            CatalogError::ScopeRequired(_) => {
                Self::new(StatusCode::BAD_REQUEST, "SCOPE_REQUIRED", e.to_string()).at("scope")
            }
            other => Self::internal(other.to_string()),
        }
    }
}
