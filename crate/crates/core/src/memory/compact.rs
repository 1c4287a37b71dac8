use serde_json::{json, Value};

use super::record::{MemoryRecord, RecordKind, Status};
use super::store::MemoryError;
use crate::audit::{AuditSink, Component, EventKind};
use crate::canonical::hash_value;

/// Deterministic reducer from episode records to a
/// `{task, actions, outcomes}` document.
pub trait Summarizer {
    fn id(&self) -> &str;
    fn version(&self) -> &str;
    fn summarize(&self, inputs: &[MemoryRecord]) -> Value;
}

/// Picks the first `task`, and every `action` and `outcome` field, from the
/// inputs in canonical order.
#[derive(Debug, Clone, Default)]
pub struct EpisodeSummarizer;

impl Summarizer for EpisodeSummarizer {
    fn id(&self) -> &str {
        "episode-summarizer"
    }

    fn version(&self) -> &str {
        "1"
    }

    fn summarize(&self, inputs: &[MemoryRecord]) -> Value {
        let task = inputs
            .iter()
            .find_map(|r| r.content.get("task").cloned())
            .unwrap_or_else(|| Value::String(inputs.first().map(|r| r.id.clone()).unwrap_or_default()));
        let actions: Vec<Value> = inputs.iter().filter_map(|r| r.content.get("action").cloned()).collect();
        let outcomes: Vec<Value> = inputs.iter().filter_map(|r| r.content.get("outcome").cloned()).collect();
        json!({"actions": actions, "outcomes": outcomes, "task": task})
    }
}

/// Summarizes published or episodic records into a Draft summary record.
/// Inputs are ordered and de-duplicated by content hash, so the same input
/// set always yields the same id and content hash.
pub fn compact(
    records: &[MemoryRecord],
    summarizer: &dyn Summarizer,
    sink: &dyn AuditSink,
) -> Result<MemoryRecord, MemoryError> {
    if records.is_empty() {
        return Err(MemoryError::EmptyInput);
    }
    if let Some(bad) = records
        .iter()
        .find(|r| r.status != Status::Published && r.kind != RecordKind::Episodic)
    {
        return Err(MemoryError::NotCompactable(bad.id.clone()));
    }
    let mut inputs: Vec<MemoryRecord> = records.to_vec();
    inputs.sort_by(|a, b| a.content_hash.cmp(&b.content_hash).then_with(|| a.id.cmp(&b.id)));
    inputs.dedup_by(|a, b| a.content_hash == b.content_hash);

    let input_hashes: Vec<String> = inputs.iter().map(|r| r.content_hash.to_hex()).collect();
    let summary_key = hash_value(&json!({
        "inputs": input_hashes,
        "summarizer": summarizer.id(),
        "version": summarizer.version(),
    }));
    let content = summarizer.summarize(&inputs);
    let tier = inputs.iter().map(|r| r.tier).min().expect("non-empty");
    let mut summary = MemoryRecord::new(
        format!("summary:{}", summary_key.short()),
        content,
        format!("summary://{}@{}", summarizer.id(), summarizer.version()),
        tier,
    )
    .kind(RecordKind::Summary);
    summary.version = 1;
    summary.created_at = inputs.iter().map(|r| r.created_at).max().unwrap_or(0);
    summary.back_pointers = inputs.iter().map(|r| r.id.clone()).collect();
    summary.policy_id = "compaction".into();

    sink.emit(
        Component::Memory,
        EventKind::Compaction,
        json!({
            "back_pointers": summary.back_pointers,
            "content_hash": summary.content_hash,
            "input_hashes": input_hashes,
            "summarizer": format!("{}@{}", summarizer.id(), summarizer.version()),
            "summary_id": summary.id,
        }),
    );
    Ok(summary)
}
