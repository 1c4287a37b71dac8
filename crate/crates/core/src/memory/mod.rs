//! Governed memory: versioned records with provenance and trust tiers,
//! sanitization, freshness-aware retrieval, a paged working set, idempotent
//! compaction, and two-phase publication.

mod compact;
mod record;
mod retrieve;
mod sanitize;
mod selftest;
mod store;
mod working;

pub use compact::{compact, EpisodeSummarizer, Summarizer};
pub use record::{MemoryRecord, RecordKind, Status, Tier};
pub use retrieve::{decay_fixed, raw_score, retrieve, tokens, RetrievalPolicy, RetrievalResult, RetrievedItem, TierWeights, DECAY_ONE};
pub use sanitize::{sanitize, SanitizeFlag, Sanitizer, SanitizerConfig, SanitizerError, CONTROL_TOKEN, DENY_LIST};
pub use selftest::{corpus_drift, run_self_test, PoisonProbe, SelfTestCorpus, SelfTestReport, StalenessProbe};
pub use store::{MemoryError, MemoryStore, WritePolicy, WriterCapability, MIN_CORROBORATIONS};
pub use working::{WorkingEntry, WorkingSet};
