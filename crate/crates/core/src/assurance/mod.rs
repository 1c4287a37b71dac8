//! Verifiers, budgets, the safety supervisor and the goal/intention gates.

mod bdi;
mod budget;
mod stop;
mod supervisor;
mod verdict;

pub use bdi::{
    adoption_filter, default_reconsideration_table, execution_monitor, reconsider, Adoption, Goal, Intention,
    IntentionStatus, MalformedGoal, MonitorSignal, Objective, Observation, ReconsiderAction, Trigger, TriggerKind,
};
pub use budget::{check_budget, check_budget_logged, Budget, BudgetDecision, BudgetLedger};
pub use stop::{StopCode, WhyStopped};
pub use supervisor::{
    supervise_action, Escalation, ModeError, OperatingMode, PolicyError, Supervisor, SupervisorDecision,
    SupervisorPolicy,
};
pub use verdict::{verify, Finding, FnVerifier, Subject, SubjectKind, Verdict, Verifier, VerifierCrash, AGGREGATE_VERIFIER};
