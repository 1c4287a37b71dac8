//! Deterministic episode replay against a recorded trace.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::event::{AuditEvent, Component, EventKind};
use super::trace::{EpisodeTrace, TraceHeader};
use crate::canonical::Digest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub seq: u64,
    pub field: String,
    pub expected_hash: Option<Digest>,
    pub actual_hash: Option<Digest>,
    pub component: Option<Component>,
    /// proposal, verifier or controller
    pub fault_role: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub identical: bool,
    pub first_divergence: Option<Divergence>,
    pub events_compared: u64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("version mismatch for {what}: trace has {recorded}, build has {current}")]
    VersionMismatch {
        what: String,
        recorded: String,
        current: String,
    },
    #[error("trace is truncated: {0}")]
    TruncatedTrace(String),
    #[error("episode could not be re-run: {0}")]
    Rerun(String),
}

/// Recorded adapter replies, handed back to playback stubs in the order the
/// original run observed them, keyed by tool name.
#[derive(Debug, Clone, Default)]
pub struct Playback {
    queues: Arc<Mutex<BTreeMap<String, VecDeque<Value>>>>,
}

impl Playback {
    /// Collects the `reply` of every adapter and compensation invocation.
    pub fn from_events(events: &[AuditEvent]) -> Self {
        let mut queues: BTreeMap<String, VecDeque<Value>> = BTreeMap::new();
        for e in events {
            if !matches!(e.kind, EventKind::AdapterInvoked | EventKind::CompensationInvoked) {
                continue;
            }
            let tool = e.payload.get("tool").and_then(Value::as_str);
            let reply = e.payload.get("reply");
            if let (Some(tool), Some(reply)) = (tool, reply) {
                queues.entry(tool.to_string()).or_default().push_back(reply.clone());
            }
        }
        Self {
            queues: Arc::new(Mutex::new(queues)),
        }
    }

    pub fn next_reply(&self, tool: &str) -> Option<Value> {
        self.queues.lock().expect("playback poisoned").get_mut(tool)?.pop_front()
    }

    pub fn remaining(&self) -> usize {
        self.queues.lock().expect("playback poisoned").values().map(VecDeque::len).sum()
    }
}

/// Rebuilds an episode for replay. Implemented by the harness.
pub trait EpisodeFactory {
    /// Versions of the running build, compared against the trace header.
    fn component_versions(&self) -> BTreeMap<String, String>;
    /// Hash of the configuration the factory would run with.
    fn config_hash(&self) -> Digest;
    /// Re-runs the episode with adapters replaced by playback stubs and
    /// returns the regenerated events. Must not persist anything.
    fn rerun(&self, header: &TraceHeader, playback: Playback) -> Result<Vec<AuditEvent>, String>;
}

pub fn replay(trace: &EpisodeTrace, factory: &dyn EpisodeFactory) -> Result<ReplayReport, ReplayError> {
    let header = &trace.header;
    let current = factory.component_versions();
    for (name, recorded) in &header.component_versions {
        let now = current.get(name).cloned().unwrap_or_else(|| "<absent>".into());
        if &now != recorded {
            return Err(ReplayError::VersionMismatch {
                what: name.clone(),
                recorded: recorded.clone(),
                current: now,
            });
        }
    }
    let cfg = factory.config_hash();
    if cfg != header.config_hash {
        return Err(ReplayError::VersionMismatch {
            what: "config_hash".into(),
            recorded: header.config_hash.to_hex(),
            current: cfg.to_hex(),
        });
    }
    match trace.events.last() {
        None => return Err(ReplayError::TruncatedTrace("no events".into())),
        Some(e) if e.kind != EventKind::WhyStopped => {
            return Err(ReplayError::TruncatedTrace(format!(
                "last event {} is {:?}, not WhyStopped",
                e.seq, e.kind
            )))
        }
        _ => {}
    }

    let playback = Playback::from_events(&trace.events);
    let regenerated = factory.rerun(header, playback).map_err(ReplayError::Rerun)?;
    Ok(compare(header, &trace.events, &regenerated))
}

/// Pairwise comparison. A recorded event matches only if its stored hash,
/// the hash recomputed from its body, and the regenerated hash all agree.
pub fn compare(header: &TraceHeader, recorded: &[AuditEvent], regenerated: &[AuditEvent]) -> ReplayReport {
    let algo = header.hash_algorithm;
    let n = recorded.len().min(regenerated.len());
    for i in 0..n {
        let rec = &recorded[i];
        let gen = &regenerated[i];
        let recomputed = rec.recomputed_body_hash(algo);
        if gen.payload_hash != rec.payload_hash || gen.payload_hash != recomputed {
            return ReplayReport {
                identical: false,
                first_divergence: Some(Divergence {
                    seq: i as u64,
                    field: "payload_hash".into(),
                    expected_hash: Some(rec.payload_hash),
                    actual_hash: Some(gen.payload_hash),
                    component: Some(gen.component),
                    fault_role: Some(gen.component.fault_role().into()),
                }),
                events_compared: i as u64 + 1,
            };
        }
    }
    if recorded.len() != regenerated.len() {
        let component = regenerated.get(n).or(recorded.get(n)).map(|e| e.component);
        return ReplayReport {
            identical: false,
            first_divergence: Some(Divergence {
                seq: n as u64,
                field: if regenerated.len() > n { "extra_event" } else { "missing_event" }.into(),
                expected_hash: recorded.get(n).map(|e| e.payload_hash),
                actual_hash: regenerated.get(n).map(|e| e.payload_hash),
                component,
                fault_role: component.map(|c| c.fault_role().to_string()),
            }),
            events_compared: n as u64,
        };
    }
    ReplayReport {
        identical: true,
        first_divergence: None,
        events_compared: n as u64,
    }
}
