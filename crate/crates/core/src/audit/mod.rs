//! Hash-chained, append-only audit log, trace files, and replay.
//!
//! Every event commits to its predecessor through
//! `chain_hash = H(prev_hash ‖ payload_hash ‖ seq)`, with the all-zero digest
//! as the genesis predecessor. `payload_hash` covers the canonical event body
//! (tick, component, kind, payload).

mod event;
mod log;
mod replay;
mod trace;

pub use event::{AuditEvent, Component, EventKind};
pub use log::{verify_chain, AuditLog, AuditSink, ChainStatus, NullSink, Recorder};
pub use replay::{compare, replay, Divergence, EpisodeFactory, Playback, ReplayError, ReplayReport};
pub use trace::{verify_bytes, EpisodeTrace, TraceCheck, TraceError, TraceHeader, TraceKind, TRACE_FORMAT};
