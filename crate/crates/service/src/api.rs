//! Request and response bodies.

use serde::{Deserialize, Serialize};

use flowforge::catalog::{ArtifactDoc, ArtifactKind, CatalogVersion};
use flowforge::orchestrator::Phase;
use flowforge::retriever::RankedChoices;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateFlowRequest {
    pub requirement: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateFlowResponse {
    /// Outline document: trigger and step headers.
    pub outline: String,
    pub transcript_ref: String,
}

/// A populated step before the target, as its inputs document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrefixStep {
    pub order: u32,
    pub inputs: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulateInputsRequest {
    pub requirement: String,
    pub outline: String,
    #[serde(default)]
    pub populated_prefix: Vec<PrefixStep>,
    pub target_order: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulateInputsResponse {
    pub step_inputs: String,
    pub choices_offered: Vec<RankedChoices>,
    pub transcript_ref: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub requirement: String,
    #[serde(default)]
    pub auto_continue: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    /// Path of the event stream.
    pub events: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ContinueRequest {
    /// Last step to populate; all remaining steps when absent.
    #[serde(default)]
    pub up_to: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModifyRequest {
    pub requirement: String,
    #[serde(default)]
    pub auto_continue: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superseded_by: Option<String>,
    pub requirement: String,
    #[serde(flatten)]
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outline: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow: Option<String>,
    /// Sequence number of the latest event.
    pub last_seq: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogListing {
    pub kind: ArtifactKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    pub version: CatalogVersion,
    pub artifacts: Vec<ArtifactDoc>,
}

/// Workflow documents to compare.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub pairs: Vec<DocumentPair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentPair {
    pub id: String,
    pub expected: String,
    pub generated: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub generator: String,
    pub version: CatalogVersion,
}
