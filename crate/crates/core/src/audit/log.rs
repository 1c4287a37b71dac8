use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::event::{AuditEvent, Component, EventKind};
use crate::canonical::{Digest, HashAlgorithm};
use crate::clock::{LogicalClock, Tick};

/// Append-only event chain. Events are never mutated or removed.
#[derive(Debug, Clone, Default)]
pub struct AuditLog {
    algorithm: HashAlgorithm,
    events: Vec<AuditEvent>,
}

impl AuditLog {
    pub fn new(algorithm: HashAlgorithm) -> Self {
        Self {
            algorithm,
            events: Vec::new(),
        }
    }

    pub fn algorithm(&self) -> HashAlgorithm {
        self.algorithm
    }

    pub fn append(
        &mut self,
        tick: Tick,
        component: Component,
        kind: EventKind,
        payload: Value,
    ) -> &AuditEvent {
        let seq = self.events.len() as u64;
        let prev_hash = self
            .events
            .last()
            .map(|e| e.chain_hash)
            .unwrap_or(Digest::ZERO);
        let payload_hash = AuditEvent::body_hash(self.algorithm, tick, component, kind, &payload);
        let chain_hash = AuditEvent::link_hash(self.algorithm, &prev_hash, &payload_hash, seq);
        self.events.push(AuditEvent {
            seq,
            tick,
            component,
            kind,
            payload,
            payload_hash,
            prev_hash,
            chain_hash,
        });
        self.events.last().unwrap()
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<AuditEvent> {
        self.events
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainStatus {
    Ok,
    Broken { first_bad_seq: u64 },
}

/// Recomputes every link and reports the earliest mismatch.
pub fn verify_chain(events: &[AuditEvent], algorithm: HashAlgorithm) -> ChainStatus {
    let mut prev = Digest::ZERO;
    for (i, e) in events.iter().enumerate() {
        let i = i as u64;
        let body = e.recomputed_body_hash(algorithm);
        let ok = e.seq == i
            && e.payload_hash == body
            && e.prev_hash == prev
            && e.chain_hash == AuditEvent::link_hash(algorithm, &prev, &body, i);
        if !ok {
            return ChainStatus::Broken { first_bad_seq: i };
        }
        prev = e.chain_hash;
    }
    ChainStatus::Ok
}

/// Destination for audit events emitted by kernel operations.
pub trait AuditSink: Send + Sync {
    fn emit(&self, component: Component, kind: EventKind, payload: Value);
}

/// Discards events; for callers that run an operation outside an episode.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl AuditSink for NullSink {
    fn emit(&self, _: Component, _: EventKind, _: Value) {}
}

/// The episode's single appender. Clones share the same log and clock;
/// concurrent producers are serialized by the mutex in arrival order.
#[derive(Debug, Clone)]
pub struct Recorder {
    log: Arc<Mutex<AuditLog>>,
    clock: LogicalClock,
}

impl Recorder {
    pub fn new(algorithm: HashAlgorithm, clock: LogicalClock) -> Self {
        Self {
            log: Arc::new(Mutex::new(AuditLog::new(algorithm))),
            clock,
        }
    }

    pub fn clock(&self) -> &LogicalClock {
        &self.clock
    }

    pub fn record(&self, component: Component, kind: EventKind, payload: Value) -> AuditEvent {
        let tick = self.clock.now();
        let mut log = self.log.lock().expect("audit log poisoned");
        log.append(tick, component, kind, payload).clone()
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.log.lock().expect("audit log poisoned").events().to_vec()
    }

    pub fn len(&self) -> usize {
        self.log.lock().expect("audit log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl AuditSink for Recorder {
    fn emit(&self, component: Component, kind: EventKind, payload: Value) {
        self.record(component, kind, payload);
    }
}
