use std::fmt;

use serde::{Deserialize, Serialize};

/// Authority level of a tool. The derived order is the scope ceiling
/// comparison: `ReadOnly < Simulate < ActuateReversible < ActuateIrreversible`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToolScope {
    ReadOnly,
    Simulate,
    ActuateReversible,
    ActuateIrreversible,
}

impl ToolScope {
    pub const ALL: [ToolScope; 4] = [
        ToolScope::ReadOnly,
        ToolScope::Simulate,
        ToolScope::ActuateReversible,
        ToolScope::ActuateIrreversible,
    ];

    /// True for scopes whose calls change the world.
    pub fn is_actuating(self) -> bool {
        self >= ToolScope::ActuateReversible
    }
}

impl fmt::Display for ToolScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub fn scope_leq(a: ToolScope, b: ToolScope) -> bool {
    a <= b
}

#[cfg(test)]
mod tests {
    use super::*;
    use ToolScope::*;

    #[test]
    fn order_examples() {
        assert!(scope_leq(ReadOnly, ReadOnly));
        assert!(scope_leq(Simulate, ActuateIrreversible));
        assert!(!scope_leq(ActuateReversible, Simulate));
    }

    #[test]
    fn total_order_laws() {
        for a in ToolScope::ALL {
            assert!(scope_leq(ReadOnly, a));
            assert!(scope_leq(a, a));
            for b in ToolScope::ALL {
                assert!(scope_leq(a, b) || scope_leq(b, a));
                if scope_leq(a, b) && scope_leq(b, a) {
                    assert_eq!(a, b);
                }
                for c in ToolScope::ALL {
                    if scope_leq(a, b) && scope_leq(b, c) {
                        assert!(scope_leq(a, c));
                    }
                }
            }
        }
    }
}
