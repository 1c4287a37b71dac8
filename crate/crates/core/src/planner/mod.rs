//! Plans with placeholder slots, the governed think/act loop and a
//! budgeted beam search, all driven by deterministic proposers.

mod plan;
mod react;
mod search;

pub use plan::{
    bind_step, bind_template, bind_value, placeholders_in, validate_plan, validate_plan_logged, BindError,
    CallTemplate, Placeholder, Plan, PlanError, PlanStep, RepairHint,
};
pub use react::{
    react_step, run_react, transcript_well_formed, ContractGovernor, EntryKind, Governance, Governor, Proposal,
    Proposer, ProposerError, ReactNext, ReactState, ScriptedProposer, TranscriptEntry, MAX_REPROPOSALS,
};
pub use search::{
    search, Score, ScriptedSearch, SearchBudget, SearchNode, SearchOutcome, SearchProposer, Scorer,
    DEFAULT_CONVERGENCE_WINDOW,
};

#[cfg(test)]
mod tests;
