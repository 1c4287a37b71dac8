use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assurance::{StopCode, WhyStopped};
use crate::audit::{AuditSink, Component, EventKind};
use crate::canonical::hash_value;

pub const DEFAULT_CONVERGENCE_WINDOW: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub node_id: u64,
    pub content: Value,
    /// Meaningful only when `feasible`.
    pub score: f64,
    pub feasible: bool,
    pub parent: Option<u64>,
    pub depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_expansions: u64,
    pub max_depth: u32,
    pub beam_width: usize,
    #[serde(default = "default_window")]
    pub convergence_window: u32,
}

fn default_window() -> u32 {
    DEFAULT_CONVERGENCE_WINDOW
}

impl SearchBudget {
    pub fn new(max_expansions: u64, max_depth: u32, beam_width: usize) -> Self {
        Self {
            max_expansions,
            max_depth,
            beam_width,
            convergence_window: DEFAULT_CONVERGENCE_WINDOW,
        }
    }

    pub fn with_window(mut self, rounds: u32) -> Self {
        self.convergence_window = rounds;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Score {
    Feasible(f64),
    Infeasible,
}

pub trait SearchProposer {
    fn children(&self, node: &SearchNode) -> Vec<Value>;
}

pub trait Scorer {
    fn score(&self, content: &Value) -> Score;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: SearchNode,
    pub why_stopped: WhyStopped,
    pub expansions: u64,
    pub rounds: u32,
    /// Every node created, in id order.
    pub explored: Vec<SearchNode>,
}

fn rank(a: &SearchNode, b: &SearchNode) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.node_id.cmp(&b.node_id))
}

/// Beam search in rounds. Each round expands the frontier in order, keeps
/// the best `beam_width` feasible children, and updates the incumbent on a
/// strict improvement. Stops on exhausted expansions, on an incumbent
/// unchanged for `convergence_window` rounds, or when the frontier empties
/// (contradiction if the last round produced only infeasible children).
pub fn search(
    root: Value,
    proposer: &dyn SearchProposer,
    scorer: &dyn Scorer,
    budget: &SearchBudget,
    sink: &dyn AuditSink,
) -> SearchOutcome {
    let root_node = match scorer.score(&root) {
        Score::Feasible(s) => SearchNode { node_id: 0, content: root, score: s, feasible: true, parent: None, depth: 0 },
        Score::Infeasible => SearchNode { node_id: 0, content: root, score: 0.0, feasible: false, parent: None, depth: 0 },
    };
    let mut explored = vec![root_node.clone()];
    let mut best = root_node.clone();
    let mut frontier = vec![root_node];
    let mut expansions = 0u64;
    let mut rounds = 0u32;
    let mut unchanged = 0u32;

    let why = 'outer: loop {
        if frontier.is_empty() {
            break WhyStopped::new(StopCode::Convergence, "frontier exhausted");
        }
        rounds += 1;
        let mut candidates = Vec::new();
        let mut infeasible = 0usize;
        for node in &frontier {
            if node.depth >= budget.max_depth {
                continue;
            }
            if expansions >= budget.max_expansions {
                break 'outer WhyStopped::new(StopCode::BudgetExhausted, format!("{expansions} expansions"));
            }
            expansions += 1;
            let mut scored = Vec::new();
            for content in proposer.children(node) {
                let score = scorer.score(&content);
                let child = SearchNode {
                    node_id: explored.len() as u64,
                    content,
                    score: match score {
                        Score::Feasible(s) => s,
                        Score::Infeasible => 0.0,
                    },
                    feasible: matches!(score, Score::Feasible(_)),
                    parent: Some(node.node_id),
                    depth: node.depth + 1,
                };
                scored.push(json!({"node_id": child.node_id, "score": score}));
                explored.push(child.clone());
                if child.feasible {
                    candidates.push(child);
                } else {
                    infeasible += 1;
                }
            }
            sink.emit(
                Component::Planner,
                EventKind::SearchExpansion,
                json!({"children": scored, "expansion": expansions, "node_id": node.node_id, "round": rounds}),
            );
        }
        candidates.sort_by(rank);
        candidates.truncate(budget.beam_width);
        if candidates.is_empty() {
            break if infeasible > 0 {
                WhyStopped::new(StopCode::Contradiction, "all children infeasible")
            } else {
                WhyStopped::new(StopCode::Convergence, "frontier exhausted")
            };
        }
        let top = &candidates[0];
        if !best.feasible || top.score > best.score {
            best = top.clone();
            unchanged = 0;
        } else {
            unchanged += 1;
            if unchanged >= budget.convergence_window {
                break WhyStopped::new(StopCode::Convergence, format!("best unchanged for {unchanged} rounds"));
            }
        }
        frontier = candidates;
    };

    sink.emit(
        Component::Planner,
        EventKind::SearchStopped,
        json!({
            "best": best,
            "budget": budget,
            "expansions": expansions,
            "rounds": rounds,
            "why_stopped": why,
        }),
    );
    SearchOutcome { best, why_stopped: why, expansions, rounds, explored }
}

/// Tree and scores keyed by content digest, as loaded from fixtures.
/// Unscored content is infeasible.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedSearch {
    pub children: BTreeMap<String, Vec<Value>>,
    pub scores: BTreeMap<String, Option<f64>>,
}

impl ScriptedSearch {
    pub fn key(content: &Value) -> String {
        hash_value(content).to_hex()
    }

    pub fn score_node(&mut self, content: &Value, score: Option<f64>) -> &mut Self {
        self.scores.insert(Self::key(content), score);
        self
    }

    pub fn add_child(&mut self, parent: &Value, child: Value, score: Option<f64>) -> &mut Self {
        self.score_node(&child, score);
        self.children.entry(Self::key(parent)).or_default().push(child);
        self
    }
}

impl SearchProposer for ScriptedSearch {
    fn children(&self, node: &SearchNode) -> Vec<Value> {
        self.children.get(&Self::key(&node.content)).cloned().unwrap_or_default()
    }
}

impl Scorer for ScriptedSearch {
    fn score(&self, content: &Value) -> Score {
        match self.scores.get(&Self::key(content)) {
            Some(Some(s)) => Score::Feasible(*s),
            _ => Score::Infeasible,
        }
    }
}
