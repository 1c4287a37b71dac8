use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use serde_json::json;

use super::stop::{StopCode, WhyStopped};
use crate::audit::{AuditSink, Component, EventKind};

fn unlimited() -> u64 {
    u64::MAX
}

/// Hard limits for an episode, dialogue role or search. Absent fields are
/// unlimited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    #[serde(default = "unlimited")]
    pub max_steps: u64,
    #[serde(default = "unlimited")]
    pub max_cost_units: u64,
    #[serde(default = "unlimited")]
    pub max_wall_ticks: u64,
    #[serde(default)]
    pub per_tool_quotas: BTreeMap<String, u64>,
}

impl Default for Budget {
    fn default() -> Self {
        Self::unlimited()
    }
}

impl Budget {
    pub fn unlimited() -> Self {
        Self {
            max_steps: u64::MAX,
            max_cost_units: u64::MAX,
            max_wall_ticks: u64::MAX,
            per_tool_quotas: BTreeMap::new(),
        }
    }

    pub fn steps(n: u64) -> Self {
        Self {
            max_steps: n,
            ..Self::unlimited()
        }
    }

    pub fn with_cost(mut self, units: u64) -> Self {
        self.max_cost_units = units;
        self
    }

    pub fn with_wall_ticks(mut self, ticks: u64) -> Self {
        self.max_wall_ticks = ticks;
        self
    }

    pub fn with_quota(mut self, tool: impl Into<String>, count: u64) -> Self {
        self.per_tool_quotas.insert(tool.into(), count);
        self
    }
}

/// Consumption mirror of [`Budget`]; also used as the increment type.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub steps: u64,
    pub cost_units: u64,
    pub wall_ticks: u64,
    #[serde(default)]
    pub per_tool: BTreeMap<String, u64>,
}

impl BudgetLedger {
    pub fn step() -> Self {
        Self {
            steps: 1,
            ..Self::default()
        }
    }

    pub fn tool_call(tool: impl Into<String>, cost_units: u64, wall_ticks: u64) -> Self {
        Self {
            steps: 1,
            cost_units,
            wall_ticks,
            per_tool: [(tool.into(), 1)].into_iter().collect(),
        }
    }

    pub fn plus(&self, inc: &BudgetLedger) -> BudgetLedger {
        let mut per_tool = self.per_tool.clone();
        for (tool, n) in &inc.per_tool {
            let slot = per_tool.entry(tool.clone()).or_insert(0);
            *slot = slot.saturating_add(*n);
        }
        BudgetLedger {
            steps: self.steps.saturating_add(inc.steps),
            cost_units: self.cost_units.saturating_add(inc.cost_units),
            wall_ticks: self.wall_ticks.saturating_add(inc.wall_ticks),
            per_tool,
        }
    }

    /// The first dimension on which this ledger exceeds `budget`, in the
    /// fixed order steps, cost_units, wall_ticks, then tools by name.
    pub fn first_violation(&self, budget: &Budget) -> Option<String> {
        if self.steps > budget.max_steps {
            return Some("steps".into());
        }
        if self.cost_units > budget.max_cost_units {
            return Some("cost_units".into());
        }
        if self.wall_ticks > budget.max_wall_ticks {
            return Some("wall_ticks".into());
        }
        for (tool, used) in &self.per_tool {
            if let Some(quota) = budget.per_tool_quotas.get(tool) {
                if used > quota {
                    return Some(format!("tool:{tool}"));
                }
            }
        }
        None
    }

    pub fn within(&self, budget: &Budget) -> bool {
        self.first_violation(budget).is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision")]
pub enum BudgetDecision {
    Continue,
    Halt { why: WhyStopped },
}

impl BudgetDecision {
    pub fn is_continue(&self) -> bool {
        matches!(self, BudgetDecision::Continue)
    }
}

/// Continue iff every dimension of `ledger + increment` stays within
/// `budget`. The caller commits the increment only on Continue.
pub fn check_budget(ledger: &BudgetLedger, budget: &Budget, increment: &BudgetLedger) -> BudgetDecision {
    match ledger.plus(increment).first_violation(budget) {
        None => BudgetDecision::Continue,
        Some(dim) => BudgetDecision::Halt {
            why: WhyStopped::new(StopCode::BudgetExceeded, dim),
        },
    }
}

/// [`check_budget`] plus a `BudgetCheck` event carrying the ledger, the
/// increment and the decision, so budget soundness can be re-checked from
/// the trace alone.
pub fn check_budget_logged(
    ledger: &BudgetLedger,
    budget: &Budget,
    increment: &BudgetLedger,
    scope: &str,
    sink: &dyn AuditSink,
) -> BudgetDecision {
    let decision = check_budget(ledger, budget, increment);
    sink.emit(
        Component::Assurance,
        EventKind::BudgetCheck,
        json!({
            "budget": budget,
            "decision": decision,
            "increment": increment,
            "ledger": ledger,
            "scope": scope,
        }),
    );
    decision
}
