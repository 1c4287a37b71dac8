use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::record::{MemoryRecord, Status, Tier};
use super::sanitize::Sanitizer;
use crate::assurance::Verdict;
use crate::audit::{AuditSink, Component, EventKind};
use crate::canonical::{canonical_of, hash_of, hash_value, Digest};
use crate::clock::Tick;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriterCapability {
    pub writer_id: String,
    /// Curated processes may write above the Untrusted tier.
    pub curated: bool,
    pub may_write: bool,
}

impl WriterCapability {
    pub fn curated(writer_id: impl Into<String>) -> Self {
        Self {
            writer_id: writer_id.into(),
            curated: true,
            may_write: true,
        }
    }

    pub fn uncurated(writer_id: impl Into<String>) -> Self {
        Self {
            writer_id: writer_id.into(),
            curated: false,
            may_write: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WritePolicy {
    pub policy_id: String,
}

impl WritePolicy {
    pub fn new(policy_id: impl Into<String>) -> Self {
        Self {
            policy_id: policy_id.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MemoryError {
    #[error("writer {0} may not perform this write")]
    CapabilityDenied(String),
    #[error("content hash mismatch: declared {declared}, computed {computed}")]
    HashMismatch { declared: Digest, computed: Digest },
    #[error("unknown record {0}")]
    UnknownRecord(String),
    #[error("verdict failed for {id}: {reasons:?}")]
    VerdictFailed { id: String, reasons: Vec<String> },
    #[error("verdict judges {judged}, not {id}")]
    VerdictSubjectMismatch { id: String, judged: String },
    #[error("{id} has {have} corroborating source(s); 2 are required")]
    InsufficientCorroboration { id: String, have: usize },
    #[error("{0} is already published")]
    AlreadyPublished(String),
    #[error("malformed retrieval policy: {0}")]
    MalformedPolicy(String),
    #[error("unknown working-set key {0}")]
    UnknownKey(String),
    #[error("nothing to compact")]
    EmptyInput,
    #[error("{0} is neither published nor episodic")]
    NotCompactable(String),
    #[error("store file: {0}")]
    Io(String),
}

pub const MIN_CORROBORATIONS: usize = 2;

/// Versioned record store. Readers take cheap snapshots; mutations copy on
/// write, so a snapshot never observes later writes. Optionally mirrored to
/// an append-only file, one canonical record per line.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    records: Arc<BTreeMap<String, MemoryRecord>>,
    sanitizer: Option<Arc<Sanitizer>>,
    file: Option<PathBuf>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_sanitizer(mut self, sanitizer: Sanitizer) -> Self {
        self.sanitizer = Some(Arc::new(sanitizer));
        self
    }

    /// Opens (or creates) a store file; the last line for each id wins.
    pub fn open(path: &Path) -> Result<Self, MemoryError> {
        let mut records = BTreeMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| MemoryError::Io(e.to_string()))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| MemoryError::Io(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: MemoryRecord =
                    serde_json::from_str(&line).map_err(|e| MemoryError::Io(format!("line {}: {e}", n + 1)))?;
                records.insert(rec.id.clone(), rec);
            }
        }
        Ok(Self {
            records: Arc::new(records),
            sanitizer: None,
            file: Some(path.to_path_buf()),
        })
    }

    pub fn snapshot(&self) -> Arc<BTreeMap<String, MemoryRecord>> {
        self.records.clone()
    }

    pub fn get(&self, id: &str) -> Option<&MemoryRecord> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &MemoryRecord> {
        self.records.values()
    }

    /// Digest over (id, version, content_hash) of every record; a change
    /// signals corpus drift to retrieval monitors.
    pub fn corpus_hash(&self) -> Digest {
        let entries: Vec<Value> = self
            .records
            .values()
            .map(|r| json!([r.id, r.version, r.content_hash]))
            .collect();
        hash_value(&Value::Array(entries))
    }

    fn sanitizer(&self) -> Arc<Sanitizer> {
        static DEFAULT: OnceLock<Arc<Sanitizer>> = OnceLock::new();
        self.sanitizer
            .clone()
            .unwrap_or_else(|| DEFAULT.get_or_init(|| Arc::new(Sanitizer::default())).clone())
    }

    fn commit(&mut self, rec: MemoryRecord) -> Result<(), MemoryError> {
        if let Some(path) = &self.file {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| MemoryError::Io(e.to_string()))?;
            writeln!(f, "{}", canonical_of(&rec)).map_err(|e| MemoryError::Io(e.to_string()))?;
        }
        Arc::make_mut(&mut self.records).insert(rec.id.clone(), rec);
        Ok(())
    }

    /// Stores `record` as a new Draft version. Untrusted content is
    /// sanitized first and its hash recomputed.
    pub fn write(
        &mut self,
        record: MemoryRecord,
        policy: &WritePolicy,
        writer: &WriterCapability,
        now: Tick,
        sink: &dyn AuditSink,
    ) -> Result<(String, u32), MemoryError> {
        let deny = |reason: &str| {
            sink.emit(
                Component::Memory,
                EventKind::MemoryWrite,
                json!({"accepted": false, "id": record.id, "policy_id": policy.policy_id, "reason": reason, "writer": writer.writer_id}),
            );
        };
        if !writer.may_write || (!writer.curated && record.tier > Tier::Untrusted) {
            deny("capability_denied");
            return Err(MemoryError::CapabilityDenied(writer.writer_id.clone()));
        }
        let computed = hash_value(&record.content);
        if computed != record.content_hash {
            deny("hash_mismatch");
            return Err(MemoryError::HashMismatch {
                declared: record.content_hash,
                computed,
            });
        }

        let mut rec = record;
        if rec.tier == Tier::Untrusted {
            let (clean, flags) = self.sanitizer().sanitize_value(&rec.content);
            rec.content = clean;
            rec.content_hash = hash_value(&rec.content);
            rec.sanitization_flags = flags;
        }
        rec.version = self.records.get(&rec.id).map_or(1, |prev| prev.version + 1);
        rec.status = Status::Draft;
        rec.created_at = now;
        rec.policy_id = policy.policy_id.clone();
        rec.verification_failed = false;
        rec.verdict_refs.clear();
        if !rec.source_uri.is_empty() {
            rec.corroborations.insert(rec.source_uri.clone());
        }

        sink.emit(
            Component::Memory,
            EventKind::MemoryWrite,
            json!({
                "accepted": true,
                "content_hash": rec.content_hash,
                "id": rec.id,
                "kind": rec.kind,
                "policy_id": rec.policy_id,
                "sanitization_flags": rec.sanitization_flags.len(),
                "source_uri": rec.source_uri,
                "tier": rec.tier,
                "version": rec.version,
                "writer": writer.writer_id,
            }),
        );
        let out = (rec.id.clone(), rec.version);
        self.commit(rec)?;
        Ok(out)
    }

    /// Adds an independent source to a record without changing its version.
    pub fn corroborate(&mut self, id: &str, source_uri: &str, sink: &dyn AuditSink) -> Result<usize, MemoryError> {
        let mut rec = self.records.get(id).cloned().ok_or_else(|| MemoryError::UnknownRecord(id.into()))?;
        rec.corroborations.insert(source_uri.to_string());
        let n = rec.corroborations.len();
        sink.emit(
            Component::Memory,
            EventKind::MemoryWrite,
            json!({"corroboration": source_uri, "id": id, "sources": n, "version": rec.version}),
        );
        self.commit(rec)?;
        Ok(n)
    }

    /// Draft→Verified on a passing verdict; Verified→Published on a passing
    /// verdict with at least two distinct sources.
    pub fn promote(&mut self, id: &str, verdict: &Verdict, sink: &dyn AuditSink) -> Result<MemoryRecord, MemoryError> {
        let current = self.records.get(id).cloned().ok_or_else(|| MemoryError::UnknownRecord(id.into()))?;
        let log = |to: Status, accepted: bool, reason: &str| {
            sink.emit(
                Component::Memory,
                EventKind::Promotion,
                json!({
                    "accepted": accepted,
                    "from": current.status,
                    "id": id,
                    "reason": reason,
                    "to": to,
                    "verdict_ref": verdict.verdict_id,
                    "version": current.version,
                }),
            );
        };

        if verdict.subject_ref != id {
            log(current.status, false, "verdict_subject_mismatch");
            return Err(MemoryError::VerdictSubjectMismatch {
                id: id.into(),
                judged: verdict.subject_ref.clone(),
            });
        }
        if current.status == Status::Published {
            log(current.status, false, "already_published");
            return Err(MemoryError::AlreadyPublished(id.into()));
        }
        if !verdict.pass {
            log(current.status, false, "verdict_failed");
            let mut flagged = current.clone();
            flagged.verification_failed = true;
            flagged.verdict_refs.push(verdict.verdict_id.clone());
            self.commit(flagged)?;
            return Err(MemoryError::VerdictFailed {
                id: id.into(),
                reasons: verdict.reason_codes.clone(),
            });
        }
        let next = match current.status {
            Status::Draft => Status::Verified,
            Status::Verified => {
                if current.corroborations.len() < MIN_CORROBORATIONS {
                    log(current.status, false, "insufficient_corroboration");
                    return Err(MemoryError::InsufficientCorroboration {
                        id: id.into(),
                        have: current.corroborations.len(),
                    });
                }
                Status::Published
            }
            Status::Published => unreachable!("handled above"),
        };
        log(next, true, "ok");
        let mut rec = current.clone();
        rec.status = next;
        rec.verdict_refs.push(verdict.verdict_id.clone());
        self.commit(rec.clone())?;
        Ok(rec)
    }

    /// Digest of the full store contents.
    pub fn content_digest(&self) -> Digest {
        hash_of(&*self.records)
    }
}
