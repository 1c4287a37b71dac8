use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::adapter::ToolAdapter;
use super::breaker::{breaker_admit, breaker_record, BreakerState};
use crate::assurance::Verdict;
use crate::audit::{AuditSink, Component, EventKind};
use crate::canonical::{hash_value, seeded_u64, Digest};
use crate::clock::{LogicalClock, Tick};
use crate::contracts::{Permit, ToolCall, ToolRegistry, ToolScope, ToolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeStatus {
    Ok,
    ToolError,
    Refused,
    Conflict,
    BreakerOpen,
    RateLimited,
    TimedOut,
}

impl fmt::Display for OutcomeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayOutcome {
    pub call_id: String,
    pub status: OutcomeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<String>,
    pub attempts: u32,
    pub ticks_elapsed: u64,
}

impl GatewayOutcome {
    fn early(call_id: &str, status: OutcomeStatus, code: &str) -> Self {
        Self {
            call_id: call_id.to_string(),
            status,
            result: None,
            error_code: Some(code.to_string()),
            attempts: 0,
            ticks_elapsed: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == OutcomeStatus::Ok
    }
}

pub const SIMULATION_GATE_UNSATISFIED: &str = "SimulationGateUnsatisfied";
pub const APPROVAL_MISSING: &str = "OperatorApprovalMissing";
pub const SAFE_HALT_ACTIVE: &str = "SafeHaltActive";
pub const TIMEOUT_CODE: &str = "timeout";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    /// Retries after the first attempt.
    #[serde(default = "GatewayConfig::default_retry_max")]
    pub retry_max: u32,
    #[serde(default = "GatewayConfig::default_backoff_base")]
    pub backoff_base: u64,
    #[serde(default = "GatewayConfig::default_failure_threshold")]
    pub failure_threshold: u32,
    #[serde(default = "GatewayConfig::default_cooldown")]
    pub breaker_cooldown: u64,
}

impl GatewayConfig {
    fn default_retry_max() -> u32 {
        3
    }
    fn default_backoff_base() -> u64 {
        1
    }
    fn default_failure_threshold() -> u32 {
        3
    }
    fn default_cooldown() -> u64 {
        10
    }

    /// Ticks to wait before `attempt` (2-based: the first retry).
    pub fn backoff(&self, call_id: &str, attempt: u32, seed: u64) -> u64 {
        let base = self.backoff_base.max(1);
        let doubling = base.saturating_mul(1u64 << (attempt.saturating_sub(2)).min(32));
        doubling + seeded_u64(seed, &[call_id, &attempt.to_string()]) % base
    }
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            retry_max: Self::default_retry_max(),
            backoff_base: Self::default_backoff_base(),
            failure_threshold: Self::default_failure_threshold(),
            breaker_cooldown: Self::default_cooldown(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdempotencyRecord {
    pub key: String,
    pub call_fingerprint: Digest,
    pub outcome: GatewayOutcome,
    pub first_seen: Tick,
}

#[derive(Debug, Clone)]
enum Slot {
    InFlight(Digest),
    Done(IdempotencyRecord),
}

#[derive(Default)]
struct State {
    slots: BTreeMap<String, Slot>,
    breakers: BTreeMap<String, BreakerState>,
    admitted: BTreeMap<String, VecDeque<Tick>>,
    simulations: BTreeMap<String, Verdict>,
    approvals: BTreeSet<String>,
    safe_halt: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("no tool {0}@{1} in the registry")]
    UnknownTool(String, String),
}

/// The execution boundary. Adapters run outside the state lock; admission,
/// idempotency bookkeeping and outcome commitment happen under it.
pub struct Gateway {
    registry: Arc<ToolRegistry>,
    adapters: BTreeMap<(String, String), Arc<dyn ToolAdapter>>,
    config: GatewayConfig,
    clock: LogicalClock,
    state: Mutex<State>,
    settled: Condvar,
}

enum Admission {
    Run { admitted_at: Tick },
    Cached(IdempotencyRecord),
    Reject(GatewayOutcome),
}

impl Gateway {
    pub fn new(registry: Arc<ToolRegistry>, config: GatewayConfig, clock: LogicalClock) -> Self {
        Self {
            registry,
            adapters: BTreeMap::new(),
            config,
            clock,
            state: Mutex::new(State::default()),
            settled: Condvar::new(),
        }
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn clock(&self) -> &LogicalClock {
        &self.clock
    }

    pub fn register_adapter(
        &mut self,
        name: &str,
        version: &str,
        adapter: Arc<dyn ToolAdapter>,
    ) -> Result<(), GatewayError> {
        if self.registry.get(name, version).is_none() {
            return Err(GatewayError::UnknownTool(name.into(), version.into()));
        }
        self.adapters.insert((name.to_string(), version.to_string()), adapter);
        Ok(())
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().expect("gateway state poisoned")
    }

    /// Makes a simulation verdict available to the actuation gate.
    pub fn record_simulation(&self, verdict: &Verdict) {
        self.lock().simulations.insert(verdict.verdict_id.clone(), verdict.clone());
    }

    /// Registers an operator approval for an irreversible call.
    pub fn record_approval(&self, call_id: &str, operator: &str, sink: &dyn AuditSink) {
        self.lock().approvals.insert(call_id.to_string());
        sink.emit(
            Component::Gateway,
            EventKind::OperatorApproval,
            json!({"call_id": call_id, "operator": operator}),
        );
    }

    /// While engaged, every actuating call is refused.
    pub fn engage_safe_halt(&self) {
        self.lock().safe_halt = true;
    }

    pub fn release_safe_halt(&self) {
        self.lock().safe_halt = false;
    }

    pub fn breaker(&self, tool: &str) -> Option<BreakerState> {
        self.lock().breakers.get(tool).cloned()
    }

    pub fn idempotency_records(&self) -> Vec<IdempotencyRecord> {
        self.lock()
            .slots
            .values()
            .filter_map(|s| match s {
                Slot::Done(r) => Some(r.clone()),
                Slot::InFlight(_) => None,
            })
            .collect()
    }

    pub fn execute(&self, permit: &Permit, spec: &ToolSpec, seed: u64, sink: &dyn AuditSink) -> GatewayOutcome {
        self.run(permit.call(), spec, seed, EventKind::AdapterInvoked, sink)
    }

    /// Runs a compensating call. Compensations restore a previous state, so
    /// they skip the simulate-before-actuate gate and the safe-halt latch;
    /// they are logged under their own event kind.
    pub fn execute_compensation(&self, call: &ToolCall, seed: u64, sink: &dyn AuditSink) -> GatewayOutcome {
        match self.registry.get(&call.tool_name, &call.tool_version) {
            Some(spec) => {
                let spec = spec.clone();
                self.run(call, &spec, seed, EventKind::CompensationInvoked, sink)
            }
            None => {
                let out = GatewayOutcome::early(&call.call_id, OutcomeStatus::Refused, "UnknownTool");
                self.emit_outcome(call, ToolScope::ReadOnly, &out, None, sink);
                out
            }
        }
    }

    fn run(&self, call: &ToolCall, spec: &ToolSpec, seed: u64, kind: EventKind, sink: &dyn AuditSink) -> GatewayOutcome {
        let adapter = self
            .adapters
            .get(&(spec.name.clone(), spec.version.clone()))
            .cloned();
        let early = if call.tool_name != spec.name || call.tool_version != spec.version {
            Some("SpecMismatch")
        } else if adapter.is_none() {
            Some("AdapterMissing")
        } else {
            None
        };
        if let Some(code) = early {
            let out = GatewayOutcome::early(&call.call_id, OutcomeStatus::Refused, code);
            self.emit_outcome(call, spec.scope, &out, None, sink);
            return out;
        }
        let adapter = adapter.expect("checked above");

        let admitted_at = match self.admit(call, spec, kind) {
            Admission::Run { admitted_at } => admitted_at,
            Admission::Cached(record) => {
                sink.emit(
                    Component::Gateway,
                    EventKind::IdempotentReplay,
                    json!({
                        "call_id": call.call_id,
                        "fingerprint": record.call_fingerprint,
                        "key": record.key,
                        "original_call_id": record.outcome.call_id,
                    }),
                );
                return record.outcome;
            }
            Admission::Reject(out) => {
                self.emit_outcome(call, spec.scope, &out, None, sink);
                return out;
            }
        };

        let outcome = self.attempts(adapter.as_ref(), call, spec, seed, kind, sink);
        self.commit(call, spec, &outcome, admitted_at);
        self.emit_outcome(call, spec.scope, &outcome, Some(admitted_at), sink);
        outcome
    }

    fn admit(&self, call: &ToolCall, spec: &ToolSpec, kind: EventKind) -> Admission {
        let refuse = |status, code: &str| Admission::Reject(GatewayOutcome::early(&call.call_id, status, code));
        let mut st = self.lock();

        if kind == EventKind::AdapterInvoked && spec.scope.is_actuating() {
            if st.safe_halt {
                return refuse(OutcomeStatus::Refused, SAFE_HALT_ACTIVE);
            }
            let step = call.origin.as_deref().unwrap_or(&call.call_id);
            let cleared = call
                .sim_verdict_ref
                .as_ref()
                .and_then(|id| st.simulations.get(id))
                .is_some_and(|v| v.pass && v.subject_ref == step);
            if !cleared {
                return refuse(OutcomeStatus::Refused, SIMULATION_GATE_UNSATISFIED);
            }
            if spec.scope == ToolScope::ActuateIrreversible && !st.approvals.contains(&call.call_id) {
                return refuse(OutcomeStatus::Refused, APPROVAL_MISSING);
            }
        }

        let fingerprint = call.fingerprint();
        if let Some(key) = &call.idempotency_key {
            loop {
                match st.slots.get(key) {
                    Some(Slot::Done(rec)) if rec.call_fingerprint == fingerprint => return Admission::Cached(rec.clone()),
                    Some(Slot::Done(_)) => return refuse(OutcomeStatus::Conflict, "Conflict"),
                    Some(Slot::InFlight(fp)) if *fp != fingerprint => return refuse(OutcomeStatus::Conflict, "Conflict"),
                    Some(Slot::InFlight(_)) => {
                        st = self.settled.wait(st).expect("gateway state poisoned");
                    }
                    None => break,
                }
            }
        }

        let now = self.clock.now();
        let window = spec.rate_limit.window_ticks.max(1);
        let admitted = st.admitted.entry(spec.name.clone()).or_default();
        while admitted.front().is_some_and(|t| now.saturating_sub(*t) >= window) {
            admitted.pop_front();
        }
        if admitted.len() as u64 >= u64::from(spec.rate_limit.count) {
            return refuse(OutcomeStatus::RateLimited, "RateLimited");
        }

        let breaker = st
            .breakers
            .entry(spec.name.clone())
            .or_insert_with(|| BreakerState::closed(&spec.name, self.config.failure_threshold, self.config.breaker_cooldown));
        let decision = breaker_admit(breaker, now);
        *breaker = decision.next_state;
        if !decision.admit {
            return refuse(OutcomeStatus::BreakerOpen, "BreakerOpen");
        }

        st.admitted.entry(spec.name.clone()).or_default().push_back(now);
        if let Some(key) = &call.idempotency_key {
            st.slots.insert(key.clone(), Slot::InFlight(fingerprint));
        }
        Admission::Run { admitted_at: now }
    }

    fn attempts(
        &self,
        adapter: &dyn ToolAdapter,
        call: &ToolCall,
        spec: &ToolSpec,
        seed: u64,
        kind: EventKind,
        sink: &dyn AuditSink,
    ) -> GatewayOutcome {
        let component = Component::Gateway;
        let max_attempts = self.config.retry_max.saturating_add(1);
        let args_hash = hash_value(&call.args);
        let mut elapsed = 0u64;
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            if attempt > 1 {
                let wait = self.config.backoff(&call.call_id, attempt, seed);
                self.clock.advance(wait);
                elapsed += wait;
            }
            let attempt_seed = seeded_u64(seed, &[&call.call_id, &attempt.to_string()]);
            let reply = adapter.invoke(&call.args, spec.timeout_ticks, attempt_seed);
            let consumed = reply.ticks.min(spec.timeout_ticks);
            self.clock.advance(consumed);
            elapsed += consumed;
            sink.emit(
                component,
                kind,
                json!({
                    "args_hash": args_hash,
                    "attempt": attempt,
                    "call_id": call.call_id,
                    "reply": reply.to_value(),
                    "scope": spec.scope,
                    "step": call.origin,
                    "tool": spec.name,
                    "version": spec.version,
                }),
            );
            let (status, code) = if reply.ticks > spec.timeout_ticks {
                (OutcomeStatus::TimedOut, TIMEOUT_CODE.to_string())
            } else {
                match reply.result {
                    Ok(result) => {
                        return GatewayOutcome {
                            call_id: call.call_id.clone(),
                            status: OutcomeStatus::Ok,
                            result: Some(result),
                            error_code: None,
                            attempts: attempt,
                            ticks_elapsed: elapsed,
                        }
                    }
                    Err(code) => (OutcomeStatus::ToolError, code),
                }
            };
            let retryable = call.idempotency_key.is_some() && spec.transient_error_codes.contains(&code);
            if !retryable || attempt >= max_attempts {
                return GatewayOutcome {
                    call_id: call.call_id.clone(),
                    status,
                    result: None,
                    error_code: Some(code),
                    attempts: attempt,
                    ticks_elapsed: elapsed,
                };
            }
        }
    }

    fn commit(&self, call: &ToolCall, spec: &ToolSpec, outcome: &GatewayOutcome, admitted_at: Tick) {
        let now = self.clock.now();
        let mut st = self.lock();
        if let Some(b) = st.breakers.get_mut(&spec.name) {
            *b = breaker_record(b, outcome.is_ok(), now);
        }
        if let Some(key) = &call.idempotency_key {
            st.slots.insert(
                key.clone(),
                Slot::Done(IdempotencyRecord {
                    key: key.clone(),
                    call_fingerprint: call.fingerprint(),
                    outcome: outcome.clone(),
                    first_seen: admitted_at,
                }),
            );
        }
        drop(st);
        self.settled.notify_all();
    }

    fn emit_outcome(
        &self,
        call: &ToolCall,
        scope: ToolScope,
        outcome: &GatewayOutcome,
        admitted_at: Option<Tick>,
        sink: &dyn AuditSink,
    ) {
        sink.emit(
            Component::Gateway,
            EventKind::GatewayOutcome,
            json!({
                "admitted_at": admitted_at,
                "key": call.idempotency_key,
                "outcome": outcome,
                "scope": scope,
                "step": call.origin,
                "tool": call.tool_name,
            }),
        );
    }
}
