use std::fmt;

use serde::{Deserialize, Serialize};

/// Termination label. The planning-search vocabulary (`budget_exhausted`,
/// `convergence`, `contradiction`) and the dialogue/episode vocabulary
/// (`budget_exceeded`, `non_convergence`, ...) are kept as distinct codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCode {
    GoalSatisfied,
    ConsensusReached,
    BudgetExceeded,
    NonConvergence,
    BudgetExhausted,
    Convergence,
    Contradiction,
    SafetyHalt,
    VerifierRejection,
    Deadlock,
    OperatorAbort,
}

impl StopCode {
    pub fn as_str(self) -> &'static str {
        match self {
            StopCode::GoalSatisfied => "goal_satisfied",
            StopCode::ConsensusReached => "consensus_reached",
            StopCode::BudgetExceeded => "budget_exceeded",
            StopCode::NonConvergence => "non_convergence",
            StopCode::BudgetExhausted => "budget_exhausted",
            StopCode::Convergence => "convergence",
            StopCode::Contradiction => "contradiction",
            StopCode::SafetyHalt => "safety_halt",
            StopCode::VerifierRejection => "verifier_rejection",
            StopCode::Deadlock => "deadlock",
            StopCode::OperatorAbort => "operator_abort",
        }
    }

    /// Process exit code for the CLI: 0 success, 10 budget family,
    /// 20 safety, 30 verifier, 40 non-convergence/deadlock.
    pub fn exit_code(self) -> i32 {
        match self {
            StopCode::GoalSatisfied | StopCode::ConsensusReached | StopCode::Convergence => 0,
            StopCode::BudgetExceeded | StopCode::BudgetExhausted => 10,
            StopCode::SafetyHalt | StopCode::OperatorAbort => 20,
            StopCode::VerifierRejection | StopCode::Contradiction => 30,
            StopCode::NonConvergence | StopCode::Deadlock => 40,
        }
    }
}

impl fmt::Display for StopCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhyStopped {
    pub code: StopCode,
    pub detail: String,
}

impl WhyStopped {
    pub fn new(code: StopCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for WhyStopped {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.detail.is_empty() {
            write!(f, "{}", self.code)
        } else {
            write!(f, "{} ({})", self.code, self.detail)
        }
    }
}
