//! Trace files: one canonical header document followed by one canonical
//! event per line. The format allows streaming verification.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::event::{AuditEvent, EventKind};
use super::log::{verify_chain, ChainStatus};
use crate::canonical::{canonical_of, Digest, HashAlgorithm};

pub const TRACE_FORMAT: &str = "agentk-trace/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Episode,
    Dialogue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format: String,
    pub kind: TraceKind,
    pub episode_id: String,
    pub seed: u64,
    pub hash_algorithm: HashAlgorithm,
    pub config_hash: Digest,
    pub registry_hash: Digest,
    pub policy_hash: Digest,
    pub component_versions: BTreeMap<String, String>,
    /// Scenario config the episode was run from, for replay.
    pub config_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub events: Vec<AuditEvent>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed trace header: {0}")]
    Header(String),
    #[error("malformed event at seq {seq}: {reason}")]
    Event { seq: u64, reason: String },
}

/// Result of streaming verification over a trace file's bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TraceCheck {
    Ok { events: u64 },
    Broken { first_bad_seq: u64, reason: String },
    BadHeader { reason: String },
}

impl EpisodeTrace {
    pub fn to_text(&self) -> String {
        let mut out = canonical_of(&self.header);
        out.push('\n');
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, TraceError> {
        let bytes = std::fs::read(path)?;
        Self::parse(&bytes)
    }

    /// Parses without integrity checks beyond JSON shape; see [`verify_bytes`].
    pub fn parse(bytes: &[u8]) -> Result<Self, TraceError> {
        let mut lines = bytes.split(|b| *b == b'\n');
        let head = lines.next().ok_or_else(|| TraceError::Header("empty file".into()))?;
        let header: TraceHeader =
            serde_json::from_slice(head).map_err(|e| TraceError::Header(e.to_string()))?;
        let mut events = Vec::new();
        let body: Vec<&[u8]> = lines.collect();
        for (i, line) in body.iter().enumerate() {
            if line.is_empty() && i + 1 == body.len() {
                break;
            }
            let e: AuditEvent = serde_json::from_slice(line).map_err(|err| TraceError::Event {
                seq: i as u64,
                reason: err.to_string(),
            })?;
            events.push(e);
        }
        Ok(Self { header, events })
    }

    pub fn verify(&self) -> ChainStatus {
        verify_chain(&self.events, self.header.hash_algorithm)
    }
}

/// Full integrity check of a trace file: header shape, per-line canonical
/// encoding, the hash chain, and the header echo carried by event 0. Any
/// single-byte change is attributed to the event line containing it.
pub fn verify_bytes(bytes: &[u8]) -> TraceCheck {
    let mut lines: Vec<&[u8]> = bytes.split(|b| *b == b'\n').collect();
    // A well-formed file ends in a newline, leaving one empty tail element.
    let well_terminated = matches!(lines.last(), Some(l) if l.is_empty());
    if well_terminated {
        lines.pop();
    }
    if lines.is_empty() {
        return TraceCheck::BadHeader { reason: "empty file".into() };
    }
    let head = lines.remove(0);
    let header: TraceHeader = match serde_json::from_slice(head) {
        Ok(h) => h,
        Err(e) => return TraceCheck::BadHeader { reason: e.to_string() },
    };
    if canonical_of(&header).as_bytes() != head {
        return TraceCheck::BadHeader { reason: "non-canonical header encoding".into() };
    }
    if header.format != TRACE_FORMAT {
        return TraceCheck::BadHeader { reason: format!("unsupported format {}", header.format) };
    }
    if !well_terminated && lines.is_empty() {
        return TraceCheck::BadHeader { reason: "missing line terminator".into() };
    }

    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let seq = i as u64;
        let e: AuditEvent = match serde_json::from_slice(line) {
            Ok(e) => e,
            Err(err) => {
                return TraceCheck::Broken { first_bad_seq: seq, reason: format!("malformed: {err}") }
            }
        };
        if e.to_line().as_bytes() != *line {
            return TraceCheck::Broken { first_bad_seq: seq, reason: "non-canonical encoding".into() };
        }
        if i + 1 == lines.len() && !well_terminated {
            return TraceCheck::Broken { first_bad_seq: seq, reason: "missing line terminator".into() };
        }
        events.push(e);
    }
    if let ChainStatus::Broken { first_bad_seq } = verify_chain(&events, header.hash_algorithm) {
        return TraceCheck::Broken { first_bad_seq, reason: "hash chain mismatch".into() };
    }
    if let Some(first) = events.first() {
        let echoed = first.kind == EventKind::EpisodeStarted
            && first.payload.get("header") == Some(&crate::canonical::to_value(&header));
        if !echoed {
            return TraceCheck::BadHeader { reason: "header differs from genesis event".into() };
        }
    }
    TraceCheck::Ok { events: events.len() as u64 }
}
