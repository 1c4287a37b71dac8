use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::canonical::{Digest, HashAlgorithm};
use crate::clock::Tick;

/// Kernel component that produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Contracts,
    Gateway,
    Memory,
    Planner,
    Assurance,
    Protocol,
    Audit,
    Harness,
}

impl Component {
    /// Fault-isolation role used in replay divergence reports.
    pub fn fault_role(self) -> &'static str {
        match self {
            Component::Planner | Component::Protocol => "proposal",
            Component::Assurance | Component::Contracts => "verifier",
            Component::Gateway | Component::Memory | Component::Harness | Component::Audit => {
                "controller"
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    EpisodeStarted,
    GoalAdopted,
    GoalRejected,
    PlanValidated,
    PlanRejected,
    StepSkipped,
    CallValidated,
    CallRejected,
    Permitted,
    Refused,
    BudgetCheck,
    SagaIntent,
    SagaUpdate,
    AdapterInvoked,
    GatewayOutcome,
    IdempotentReplay,
    CompensationInvoked,
    NonCompensatable,
    CompensationFailed,
    VerdictIssued,
    SupervisorDecision,
    SafeHalt,
    Escalation,
    ModeChange,
    OperatorApproval,
    OperatorOverride,
    MonitorTrigger,
    Reconsidered,
    MemoryWrite,
    Promotion,
    Retrieval,
    PageIn,
    Evicted,
    Compaction,
    ReactEntry,
    SearchExpansion,
    SearchStopped,
    MessagePosted,
    ProtocolViolation,
    Arbitration,
    WhyStopped,
}

/// A sealed, hash-chained audit event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEvent {
    pub seq: u64,
    pub tick: Tick,
    pub component: Component,
    pub kind: EventKind,
    pub payload: Value,
    pub payload_hash: Digest,
    pub prev_hash: Digest,
    pub chain_hash: Digest,
}

impl AuditEvent {
    /// Digest over the event body: tick, component, kind and canonical
    /// payload. Covering the whole body means no field of a sealed event can
    /// change without breaking the chain.
    pub fn body_hash(
        algo: HashAlgorithm,
        tick: Tick,
        component: Component,
        kind: EventKind,
        payload: &Value,
    ) -> Digest {
        let body = json!({
            "component": component,
            "kind": kind,
            "payload": payload,
            "tick": tick,
        });
        algo.digest(crate::canonical::canonical_string(&body).as_bytes())
    }

    /// `H(prev_hash ‖ payload_hash ‖ seq)` with seq as 8 big-endian bytes.
    pub fn link_hash(algo: HashAlgorithm, prev: &Digest, payload_hash: &Digest, seq: u64) -> Digest {
        let mut buf = Vec::with_capacity(72);
        buf.extend_from_slice(prev.as_bytes());
        buf.extend_from_slice(payload_hash.as_bytes());
        buf.extend_from_slice(&seq.to_be_bytes());
        algo.digest(&buf)
    }

    pub fn recomputed_body_hash(&self, algo: HashAlgorithm) -> Digest {
        Self::body_hash(algo, self.tick, self.component, self.kind, &self.payload)
    }

    pub fn to_line(&self) -> String {
        crate::canonical::canonical_of(self)
    }
}
