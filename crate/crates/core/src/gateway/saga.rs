use serde::{Deserialize, Serialize};
use serde_json::json;

use super::engine::{Gateway, GatewayOutcome};
use crate::audit::{AuditSink, Component, EventKind};
use crate::contracts::ToolCall;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SagaStatus {
    Intended,
    Done,
    Compensated,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SagaEntry {
    pub step_id: String,
    pub intent: ToolCall,
    pub compensation: Option<ToolCall>,
    pub status: SagaStatus,
}

/// Write-ahead intent log for one episode's effectful steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SagaLog {
    pub saga_id: String,
    pub entries: Vec<SagaEntry>,
}

impl SagaLog {
    pub fn new(saga_id: impl Into<String>) -> Self {
        Self {
            saga_id: saga_id.into(),
            entries: Vec::new(),
        }
    }

    /// Records the intent before the call is issued.
    pub fn intend(&mut self, step_id: &str, intent: ToolCall, compensation: Option<ToolCall>, sink: &dyn AuditSink) {
        sink.emit(
            Component::Gateway,
            EventKind::SagaIntent,
            json!({
                "call_id": intent.call_id,
                "compensation": compensation.as_ref().map(|c| c.call_id.clone()),
                "saga_id": self.saga_id,
                "step": step_id,
                "tool": intent.tool_name,
            }),
        );
        self.entries.push(SagaEntry {
            step_id: step_id.to_string(),
            intent,
            compensation,
            status: SagaStatus::Intended,
        });
    }

    /// Moves the latest entry for `step_id` to `status`.
    pub fn mark(&mut self, step_id: &str, status: SagaStatus, sink: &dyn AuditSink) -> bool {
        let Some(entry) = self.entries.iter_mut().rev().find(|e| e.step_id == step_id) else {
            return false;
        };
        sink.emit(
            Component::Gateway,
            EventKind::SagaUpdate,
            json!({"from": entry.status, "saga_id": self.saga_id, "step": step_id, "to": status}),
        );
        entry.status = status;
        true
    }

    pub fn steps_with(&self, status: SagaStatus) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.status == status)
            .map(|e| e.step_id.as_str())
            .collect()
    }

    pub fn has_failure(&self) -> bool {
        self.entries.iter().any(|e| e.status == SagaStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("compensation for step {step_id} failed")]
pub struct CompensationFailed {
    pub step_id: String,
    pub outcome: GatewayOutcome,
    /// Log state at the point compensation stopped.
    pub saga: SagaLog,
}

/// Undoes every `Done` entry, newest first. Entries without a compensation
/// are flagged and left `Done`. The first failing compensation stops the walk.
pub fn compensate(
    saga: &SagaLog,
    gateway: &Gateway,
    seed: u64,
    sink: &dyn AuditSink,
) -> Result<SagaLog, CompensationFailed> {
    let mut log = saga.clone();
    for idx in (0..log.entries.len()).rev() {
        if log.entries[idx].status != SagaStatus::Done {
            continue;
        }
        let step_id = log.entries[idx].step_id.clone();
        let Some(comp) = log.entries[idx].compensation.clone() else {
            sink.emit(
                Component::Gateway,
                EventKind::NonCompensatable,
                json!({"saga_id": log.saga_id, "step": step_id}),
            );
            continue;
        };
        let outcome = gateway.execute_compensation(&comp, seed, sink);
        if !outcome.is_ok() {
            sink.emit(
                Component::Gateway,
                EventKind::CompensationFailed,
                json!({"outcome": outcome, "saga_id": log.saga_id, "step": step_id}),
            );
            return Err(CompensationFailed {
                step_id,
                outcome,
                saga: log,
            });
        }
        sink.emit(
            Component::Gateway,
            EventKind::SagaUpdate,
            json!({"from": SagaStatus::Done, "saga_id": log.saga_id, "step": step_id, "to": SagaStatus::Compensated}),
        );
        log.entries[idx].status = SagaStatus::Compensated;
    }
    Ok(log)
}
