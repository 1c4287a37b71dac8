use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::sanitize::SanitizeFlag;
use crate::canonical::{hash_value, Digest};
use crate::clock::Tick;

/// Provenance class. Ordered by trust: `Untrusted < Silver < Gold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Untrusted,
    Silver,
    Gold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Status {
    Draft,
    Verified,
    Published,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    #[default]
    Semantic,
    Episodic,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryRecord {
    pub id: String,
    pub version: u32,
    #[serde(default)]
    pub kind: RecordKind,
    pub content: Value,
    pub source_uri: String,
    pub content_hash: Digest,
    pub created_at: Tick,
    pub tier: Tier,
    #[serde(default)]
    pub validity: BTreeMap<String, Value>,
    #[serde(default)]
    pub ttl: Option<u64>,
    pub status: Status,
    #[serde(default)]
    pub policy_id: String,
    #[serde(default)]
    pub back_pointers: Vec<String>,
    #[serde(default)]
    pub corroborations: BTreeSet<String>,
    #[serde(default)]
    pub sanitization_flags: Vec<SanitizeFlag>,
    /// Set when a promotion was refused by a failing verdict.
    #[serde(default)]
    pub verification_failed: bool,
    #[serde(default)]
    pub verdict_refs: Vec<String>,
}

impl MemoryRecord {
    /// A draft with its content hash filled in; `write` assigns version,
    /// status and timestamp.
    pub fn new(id: impl Into<String>, content: Value, source_uri: impl Into<String>, tier: Tier) -> Self {
        let content_hash = hash_value(&content);
        Self {
            id: id.into(),
            version: 0,
            kind: RecordKind::Semantic,
            content,
            source_uri: source_uri.into(),
            content_hash,
            created_at: 0,
            tier,
            validity: BTreeMap::new(),
            ttl: None,
            status: Status::Draft,
            policy_id: String::new(),
            back_pointers: Vec::new(),
            corroborations: BTreeSet::new(),
            sanitization_flags: Vec::new(),
            verification_failed: false,
            verdict_refs: Vec::new(),
        }
    }

    pub fn kind(mut self, kind: RecordKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn valid_when(mut self, key: impl Into<String>, value: Value) -> Self {
        self.validity.insert(key.into(), value);
        self
    }

    pub fn ttl(mut self, ticks: u64) -> Self {
        self.ttl = Some(ticks);
        self
    }

    pub fn corroborated_by(mut self, source: impl Into<String>) -> Self {
        self.corroborations.insert(source.into());
        self
    }

    pub fn hash_matches(&self) -> bool {
        hash_value(&self.content) == self.content_hash
    }

    pub fn age(&self, now: Tick) -> u64 {
        now.saturating_sub(self.created_at)
    }

    pub fn is_fresh(&self, now: Tick) -> bool {
        self.ttl.is_none_or(|ttl| self.age(now) <= ttl)
    }

    /// Exact-equality match of every validity condition against `context`.
    /// A condition whose key the context lacks does not hold.
    pub fn valid_in(&self, context: &BTreeMap<String, Value>) -> bool {
        self.validity.iter().all(|(k, v)| context.get(k) == Some(v))
    }

    /// Concatenated string leaves of the content, used for lexical scoring.
    pub fn text(&self) -> String {
        let mut out = Vec::new();
        collect_text(&self.content, &mut out);
        out.join(" ")
    }
}

fn collect_text<'a>(v: &'a Value, out: &mut Vec<&'a str>) {
    match v {
        Value::String(s) => out.push(s),
        Value::Array(items) => items.iter().for_each(|i| collect_text(i, out)),
        Value::Object(map) => map.values().for_each(|i| collect_text(i, out)),
        _ => {}
    }
}
