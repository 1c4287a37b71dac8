use serde::{Deserialize, Serialize};

use crate::clock::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakerMode {
    Closed,
    Open,
    HalfOpen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakerState {
    pub tool_name: String,
    pub state: BreakerMode,
    pub consecutive_failures: u32,
    pub opened_at: Tick,
    pub failure_threshold: u32,
    pub cooldown: u64,
    /// Set while the single half-open probe is in flight.
    pub probe_outstanding: bool,
}

impl BreakerState {
    pub fn closed(tool_name: impl Into<String>, failure_threshold: u32, cooldown: u64) -> Self {
        Self {
            tool_name: tool_name.into(),
            state: BreakerMode::Closed,
            consecutive_failures: 0,
            opened_at: 0,
            failure_threshold: failure_threshold.max(1),
            cooldown,
            probe_outstanding: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BreakerAdmission {
    pub admit: bool,
    pub next_state: BreakerState,
}

pub fn breaker_admit(state: &BreakerState, now: Tick) -> BreakerAdmission {
    let mut next = state.clone();
    let admit = match state.state {
        BreakerMode::Closed => true,
        BreakerMode::Open => {
            if now.saturating_sub(state.opened_at) >= state.cooldown {
                next.state = BreakerMode::HalfOpen;
                next.probe_outstanding = true;
                true
            } else {
                false
            }
        }
        BreakerMode::HalfOpen => {
            if state.probe_outstanding {
                false
            } else {
                next.probe_outstanding = true;
                true
            }
        }
    };
    BreakerAdmission { admit, next_state: next }
}

/// Folds the result of an admitted call into the breaker.
pub fn breaker_record(state: &BreakerState, success: bool, now: Tick) -> BreakerState {
    let mut next = state.clone();
    next.probe_outstanding = false;
    if success {
        next.state = BreakerMode::Closed;
        next.consecutive_failures = 0;
        return next;
    }
    next.consecutive_failures = state.consecutive_failures.saturating_add(1);
    match state.state {
        BreakerMode::Closed => {
            if next.consecutive_failures >= state.failure_threshold {
                next.state = BreakerMode::Open;
                next.opened_at = now;
            }
        }
        BreakerMode::HalfOpen | BreakerMode::Open => {
            next.state = BreakerMode::Open;
            next.opened_at = now;
            next.consecutive_failures = next.consecutive_failures.max(state.failure_threshold);
        }
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn healthy_breaker_admits() {
        let s = BreakerState::closed("t", 3, 5);
        assert!(breaker_admit(&s, 0).admit);
    }

    #[test]
    fn three_failures_open_then_cooldown_probe() {
        let mut s = BreakerState::closed("t", 3, 5);
        for now in 0..3 {
            s = breaker_admit(&s, now).next_state;
            s = breaker_record(&s, false, now);
        }
        assert_eq!(s.state, BreakerMode::Open);
        assert_eq!(s.opened_at, 2);
        assert!(!breaker_admit(&s, 6).admit);
        let probe = breaker_admit(&s, 7);
        assert!(probe.admit);
        assert_eq!(probe.next_state.state, BreakerMode::HalfOpen);
        // A second caller while the probe is out is refused.
        assert!(!breaker_admit(&probe.next_state, 7).admit);
        let reopened = breaker_record(&probe.next_state, false, 8);
        assert_eq!(reopened.state, BreakerMode::Open);
        assert_eq!(reopened.opened_at, 8);
        let probe = breaker_admit(&reopened, 13).next_state;
        let closed = breaker_record(&probe, true, 13);
        assert_eq!(closed.state, BreakerMode::Closed);
        assert_eq!(closed.consecutive_failures, 0);
    }

    #[test]
    fn success_resets_the_count() {
        let mut s = BreakerState::closed("t", 3, 5);
        s = breaker_record(&s, false, 0);
        s = breaker_record(&s, false, 1);
        s = breaker_record(&s, true, 2);
        s = breaker_record(&s, false, 3);
        assert_eq!(s.state, BreakerMode::Closed);
        assert_eq!(s.consecutive_failures, 1);
    }
}
