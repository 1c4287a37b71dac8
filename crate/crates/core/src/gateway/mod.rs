//! Execution gateway: adapters, idempotent deduplication, bounded retries,
//! circuit breaking, rate limiting, the simulate-before-actuate gate, and
//! saga compensation.

mod adapter;
mod breaker;
mod engine;
mod saga;

pub use adapter::{AdapterReply, CountingAdapter, PlaybackAdapter, ScriptedAdapter, ToolAdapter};
pub use breaker::{breaker_admit, breaker_record, BreakerAdmission, BreakerMode, BreakerState};
pub use engine::{
    Gateway, GatewayConfig, GatewayError, GatewayOutcome, IdempotencyRecord, OutcomeStatus, APPROVAL_MISSING,
    SAFE_HALT_ACTIVE, SIMULATION_GATE_UNSATISFIED, TIMEOUT_CODE,
};
pub use saga::{compensate, CompensationFailed, SagaEntry, SagaLog, SagaStatus};
