use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::record::{MemoryRecord, Status, Tier};
use super::store::{MemoryError, MemoryStore};
use crate::audit::{AuditSink, Component, EventKind};
use crate::clock::Tick;

/// Fixed-point one for decay factors.
pub const DECAY_ONE: u64 = 1 << 32;

/// `2^(-age/half_life)` in fixed point, exact at multiples of the half-life
/// and linear in between. Integer-only so every platform ranks alike.
pub fn decay_fixed(age: u64, half_life: u64) -> u64 {
    let hl = half_life.max(1);
    let q = age / hl;
    if q >= 63 {
        return 0;
    }
    let r = age % hl;
    let base = u128::from(DECAY_ONE >> q);
    ((base * u128::from(2 * hl - r)) / u128::from(2 * hl)) as u64
}

/// Distinct lowercase alphanumeric tokens.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierWeights {
    pub gold: u32,
    pub silver: u32,
    pub untrusted: u32,
}

impl Default for TierWeights {
    fn default() -> Self {
        Self {
            gold: 4,
            silver: 2,
            untrusted: 1,
        }
    }
}

impl TierWeights {
    pub fn weight(&self, tier: Tier) -> u32 {
        match tier {
            Tier::Gold => self.gold,
            Tier::Silver => self.silver,
            Tier::Untrusted => self.untrusted,
        }
    }
}

fn published() -> Status {
    Status::Published
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalPolicy {
    pub policy_id: String,
    pub top_k: usize,
    #[serde(default)]
    pub tier_weights: TierWeights,
    pub recency_half_life: u64,
    #[serde(default)]
    pub require_citation: bool,
    #[serde(default)]
    pub context: BTreeMap<String, Value>,
    /// Lowest status a record needs to be retrievable.
    #[serde(default = "published")]
    pub min_status: Status,
}

impl RetrievalPolicy {
    pub fn new(policy_id: impl Into<String>, top_k: usize, recency_half_life: u64) -> Self {
        Self {
            policy_id: policy_id.into(),
            top_k,
            tier_weights: TierWeights::default(),
            recency_half_life,
            require_citation: false,
            context: BTreeMap::new(),
            min_status: Status::Published,
        }
    }

    pub fn check(&self) -> Result<(), MemoryError> {
        let w = &self.tier_weights;
        let problem = if self.policy_id.is_empty() {
            Some("policy_id is empty")
        } else if self.top_k == 0 {
            Some("top_k must be at least 1")
        } else if w.untrusted == 0 || w.silver < w.untrusted || w.gold < w.silver {
            Some("tier weights must be positive with gold >= silver >= untrusted")
        } else if self.recency_half_life == 0 {
            Some("recency_half_life must be positive")
        } else {
            None
        };
        match problem {
            Some(p) => Err(MemoryError::MalformedPolicy(p.into())),
            None => Ok(()),
        }
    }

    /// Whether `rec` may appear in a result at all at `now`.
    pub fn admits(&self, rec: &MemoryRecord, now: Tick) -> bool {
        rec.status >= self.min_status
            && rec.is_fresh(now)
            && rec.valid_in(&self.context)
            && (!self.require_citation || !rec.source_uri.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedItem {
    pub record: MemoryRecord,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub items: Vec<RetrievedItem>,
    pub policy_id: String,
}

/// Exact score numerator: shared tokens × tier weight × fixed-point decay.
/// All candidates of one query share the denominator |Q| · DECAY_ONE.
pub fn raw_score(query: &BTreeSet<String>, rec: &MemoryRecord, policy: &RetrievalPolicy, now: Tick) -> u128 {
    let doc = tokens(&rec.text());
    let shared = query.intersection(&doc).count() as u128;
    shared * u128::from(policy.tier_weights.weight(rec.tier)) * u128::from(decay_fixed(rec.age(now), policy.recency_half_life))
}

pub fn retrieve(
    query: &str,
    policy: &RetrievalPolicy,
    store: &MemoryStore,
    now: Tick,
    sink: &dyn AuditSink,
) -> Result<RetrievalResult, MemoryError> {
    policy.check()?;
    let q = tokens(query);
    let snapshot = store.snapshot();
    let mut scored: Vec<(u128, &MemoryRecord)> = snapshot
        .values()
        .filter(|r| policy.admits(r, now))
        .map(|r| (raw_score(&q, r, policy, now), r))
        .filter(|(s, _)| *s > 0)
        .collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.cmp(sa)
            .then_with(|| b.tier.cmp(&a.tier))
            .then_with(|| b.created_at.cmp(&a.created_at))
            .then_with(|| a.id.cmp(&b.id))
            .then(Ordering::Equal)
    });
    scored.truncate(policy.top_k);

    let denom = (q.len().max(1) as f64) * DECAY_ONE as f64;
    let items: Vec<RetrievedItem> = scored
        .into_iter()
        .map(|(s, r)| RetrievedItem {
            record: r.clone(),
            score: s as f64 / denom,
        })
        .collect();

    sink.emit(
        Component::Memory,
        EventKind::Retrieval,
        json!({
            "items": items.iter().map(|i| json!({
                "content_hash": i.record.content_hash,
                "created_at": i.record.created_at,
                "id": i.record.id,
                "score": i.score,
                "source_uri": i.record.source_uri,
                "tier": i.record.tier,
                "ttl": i.record.ttl,
                "validity": i.record.validity,
                "version": i.record.version,
            })).collect::<Vec<_>>(),
            "now": now,
            "policy_id": policy.policy_id,
            "query": query,
            "context": policy.context,
        }),
    );
    Ok(RetrievalResult {
        items,
        policy_id: policy.policy_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_is_exact_at_half_lives() {
        assert_eq!(decay_fixed(0, 10), DECAY_ONE);
        assert_eq!(decay_fixed(10, 10), DECAY_ONE / 2);
        assert_eq!(decay_fixed(20, 10), DECAY_ONE / 4);
        assert_eq!(decay_fixed(5, 10), DECAY_ONE * 3 / 4);
        assert_eq!(decay_fixed(10_000, 1), 0);
    }

    #[test]
    fn decay_is_monotone() {
        let mut prev = u64::MAX;
        for age in 0..200 {
            let d = decay_fixed(age, 7);
            assert!(d <= prev);
            prev = d;
        }
    }

    #[test]
    fn tokenizer() {
        let t = tokens("Cell-14 over TEMP, cell 14!");
        assert_eq!(t.into_iter().collect::<Vec<_>>(), vec!["14", "cell", "over", "temp"]);
    }
}
