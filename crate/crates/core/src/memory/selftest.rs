use serde::{Deserialize, Serialize};

use super::record::MemoryRecord;
use super::sanitize::Sanitizer;
use super::store::MemoryStore;
use crate::canonical::{hash_of, Digest};
use crate::clock::Tick;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoisonProbe {
    pub name: String,
    pub text: String,
    pub expect_flags: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StalenessProbe {
    pub name: String,
    pub created_at: Tick,
    pub ttl: Option<u64>,
    pub now: Tick,
    pub expect_fresh: bool,
}

/// Bundled retrieval self-tests: poisoning probes for the sanitizer and
/// freshness probes for the ttl filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfTestCorpus {
    pub poisoning: Vec<PoisonProbe>,
    pub staleness: Vec<StalenessProbe>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub corpus_hash: Digest,
    pub passed: usize,
    pub failures: Vec<String>,
}

impl SelfTestReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn run_self_test(sanitizer: &Sanitizer, corpus: &SelfTestCorpus) -> SelfTestReport {
    let mut failures = Vec::new();
    let mut passed = 0;
    for p in &corpus.poisoning {
        let (clean, flags) = sanitizer.sanitize(&p.text);
        let (twice, more) = sanitizer.sanitize(&clean);
        if flags.len() != p.expect_flags {
            failures.push(format!("{}: {} flag(s), expected {}", p.name, flags.len(), p.expect_flags));
        } else if twice != clean || !more.is_empty() {
            failures.push(format!("{}: sanitizing twice changed the text", p.name));
        } else {
            passed += 1;
        }
    }
    for p in &corpus.staleness {
        let mut rec = MemoryRecord::new(&p.name, serde_json::Value::Null, "selftest://", super::record::Tier::Gold);
        rec.created_at = p.created_at;
        rec.ttl = p.ttl;
        if rec.is_fresh(p.now) == p.expect_fresh {
            passed += 1;
        } else {
            failures.push(format!("{}: freshness {} expected {}", p.name, !p.expect_fresh, p.expect_fresh));
        }
    }
    SelfTestReport {
        corpus_hash: hash_of(corpus),
        passed,
        failures,
    }
}

/// With lexical scoring, retrieval drift reduces to a change in the corpus
/// itself. Returns the new corpus hash when it differs from `baseline`.
pub fn corpus_drift(baseline: Digest, store: &MemoryStore) -> Option<Digest> {
    let now = store.corpus_hash();
    (now != baseline).then_some(now)
}
