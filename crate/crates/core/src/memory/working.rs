use serde::{Deserialize, Serialize};
use serde_json::json;

use super::retrieve::decay_fixed;
use super::store::{MemoryError, MemoryStore};
use crate::audit::{AuditSink, Component, EventKind};
use crate::clock::Tick;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingEntry {
    pub id: String,
    /// access_count × fixed-point recency decay, as of the last paging pass.
    pub priority: u64,
    pub last_access: Tick,
    pub access_count: u64,
}

/// Hot context slots. Holds references to store records only; nothing in
/// here is ever written back to the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingSet {
    pub capacity: usize,
    pub half_life: u64,
    pub entries: Vec<WorkingEntry>,
}

impl WorkingSet {
    pub fn new(capacity: usize, half_life: u64) -> Self {
        Self {
            capacity,
            half_life,
            entries: Vec::new(),
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    fn reprioritize(&mut self, now: Tick) {
        for e in &mut self.entries {
            e.priority = e
                .access_count
                .saturating_mul(decay_fixed(now.saturating_sub(e.last_access), self.half_life));
        }
    }

    /// Index of the entry to evict: lowest priority, then least recently
    /// accessed, then smallest id.
    fn victim(&self) -> Option<usize> {
        self.entries
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                a.priority
                    .cmp(&b.priority)
                    .then(a.last_access.cmp(&b.last_access))
                    .then(a.id.cmp(&b.id))
            })
            .map(|(i, _)| i)
    }

    /// Pages `keys` in (or refreshes them), then evicts down to capacity.
    pub fn page_in(&mut self, keys: &[&str], store: &MemoryStore, now: Tick, sink: &dyn AuditSink) -> Result<(), MemoryError> {
        if let Some(missing) = keys.iter().find(|k| store.get(k).is_none()) {
            return Err(MemoryError::UnknownKey((*missing).to_string()));
        }
        for key in keys {
            match self.entries.iter_mut().find(|e| e.id == *key) {
                Some(e) => {
                    e.access_count += 1;
                    e.last_access = now;
                }
                None => self.entries.push(WorkingEntry {
                    id: (*key).to_string(),
                    priority: 0,
                    last_access: now,
                    access_count: 1,
                }),
            }
            self.reprioritize(now);
            let e = self.entries.iter().find(|e| e.id == *key).expect("just inserted");
            sink.emit(
                Component::Memory,
                EventKind::PageIn,
                json!({"access_count": e.access_count, "id": key, "priority": e.priority, "reason": "requested"}),
            );
            while self.entries.len() > self.capacity {
                let idx = self.victim().expect("non-empty");
                let gone = self.entries.remove(idx);
                sink.emit(
                    Component::Memory,
                    EventKind::Evicted,
                    json!({"id": gone.id, "priority": gone.priority, "reason": "capacity"}),
                );
            }
        }
        Ok(())
    }

    pub fn evict(&mut self, keys: &[&str], reason: &str, sink: &dyn AuditSink) -> Result<(), MemoryError> {
        if let Some(missing) = keys.iter().find(|k| !self.contains(k)) {
            return Err(MemoryError::UnknownKey((*missing).to_string()));
        }
        for key in keys {
            self.entries.retain(|e| e.id != *key);
            sink.emit(Component::Memory, EventKind::Evicted, json!({"id": key, "reason": reason}));
        }
        Ok(())
    }
}
