//! Logical time. All expiry, timeout, TTL and rate-window arithmetic uses
//! ticks from this counter so that replays are exact.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub type Tick = u64;

/// Shared monotonic tick counter.
#[derive(Debug, Clone, Default)]
pub struct LogicalClock(Arc<AtomicU64>);

impl LogicalClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(tick: Tick) -> Self {
        Self(Arc::new(AtomicU64::new(tick)))
    }

    pub fn now(&self) -> Tick {
        self.0.load(Ordering::SeqCst)
    }

    /// Advances by `ticks` and returns the new time.
    pub fn advance(&self, ticks: Tick) -> Tick {
        self.0.fetch_add(ticks, Ordering::SeqCst) + ticks
    }
}
