//! JSON payloads of the HTTP API. See `API.md` for the wire format.

use serde::{Deserialize, Serialize};
use wiscon_core::active::{AuditRecord, PendingQuery};
use wiscon_core::model::PoolEntry;
use wiscon_core::EnsembleResult;

use crate::config::SessionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingLabel,
    Running,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub index: usize,
    pub bitmask: u64,
    pub contextual: Vec<String>,
    pub behavioral: Vec<String>,
    pub importance: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPayload {
    pub session_id: String,
    pub sample_index: usize,
    /// Row of the source dataset the sample came from.
    pub row_index: usize,
    pub feature_names: Vec<String>,
    /// Feature values before any standardization or projection.
    pub features: Vec<f64>,
    pub margin: f64,
    pub vote_fraction: f64,
    /// Thresholded prediction of every context, in context order.
    pub predictions: Vec<u8>,
    /// Normalized voting weight of every context, in context order.
    pub weights: Vec<f64>,
    pub top_contexts: Vec<ContextSummary>,
    pub labels_used: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedPayload {
    pub session_id: String,
    pub status: SessionStatus,
    pub budget: usize,
    pub n_contexts: usize,
    pub n_train: usize,
    pub n_test: Option<usize>,
    pub query: QueryPayload,
}

/// Body of `POST /sessions/{id}/label`. The label is checked by hand so
/// that out-of-domain values give a 422 rather than a parse failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub sample_index: usize,
    pub label: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedLabel {
    pub sample_index: usize,
    pub label: u8,
    pub weight: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceDelta {
    pub context: usize,
    pub bitmask: u64,
    pub epsilon_before: f64,
    pub epsilon_after: f64,
    pub importance_before: f64,
    pub importance_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub session_id: String,
    pub status: SessionStatus,
    pub applied: AppliedLabel,
    pub deltas: Vec<ImportanceDelta>,
    pub labels_used: usize,
    pub budget: usize,
    pub next_query: Option<QueryPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestEvaluation {
    pub final_scores: Vec<f64>,
    pub auc_pr: Option<f64>,
    pub auc_roc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPayload {
    pub session_id: String,
    /// Final scores of the training rows, in training order.
    pub ensemble: EnsembleResult,
    pub test: Option<TestEvaluation>,
    pub importances: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub audit: Vec<AuditRecord<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub session_id: String,
    pub status: SessionStatus,
    pub config: SessionConfig,
    pub budget: usize,
    pub labels_used: usize,
    pub context_ids: Vec<u64>,
    pub epsilons: Vec<f64>,
    pub importances: Vec<f64>,
    pub pool: Vec<PoolEntry<f64>>,
    pub pending: Option<PendingQuery<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub kind: String,
    pub message: String,
}
