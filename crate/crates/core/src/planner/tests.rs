use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::*;
use crate::assurance::{Budget, StopCode};
use crate::audit::{EventKind, NullSink, Recorder};
use crate::canonical::HashAlgorithm;
use crate::clock::LogicalClock;
use crate::contracts::{
    CapabilityToken, FieldKind, FieldSchema, RateLimit, ToolCall, ToolRegistry, ToolScope, ToolSpec,
};
use crate::gateway::{AdapterReply, CountingAdapter, Gateway, GatewayConfig, ScriptedAdapter};

fn spec(name: &str, scope: ToolScope, fields: Vec<FieldSchema>) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        version: "1.0.0".into(),
        scope,
        arg_schema: fields,
        timeout_ticks: 10,
        rate_limit: RateLimit::default(),
        requires_idempotency_key: scope.is_actuating(),
        transient_error_codes: BTreeSet::new(),
    }
}

fn registry() -> ToolRegistry {
    ToolRegistry::from_specs(vec![
        spec("query", ToolScope::ReadOnly, vec![FieldSchema::new("asset", FieldKind::Text).required()]),
        spec(
            "assess",
            ToolScope::Simulate,
            vec![FieldSchema::new("reading", FieldKind::Decimal).required()],
        ),
        spec(
            "derate",
            ToolScope::ActuateReversible,
            vec![FieldSchema::new("fraction", FieldKind::Decimal).required().range(Some(0.0), Some(0.5))],
        ),
        spec("restore", ToolScope::ActuateReversible, vec![FieldSchema::new("asset", FieldKind::Text)]),
    ])
    .unwrap()
}

fn token() -> CapabilityToken {
    CapabilityToken {
        token_id: "tok".into(),
        subject: "planner".into(),
        tool_allowlist: vec!["*".into()],
        scope_ceiling: ToolScope::ActuateIrreversible,
        parameter_caps: BTreeMap::new(),
        expiry: u64::MAX,
        max_invocations: 100,
        invocations_used: 0,
    }
}

fn step(id: &str, tool: &str, args: Value, cost: u64) -> PlanStep {
    let mut tpl = CallTemplate::new(tool, "1.0.0", args);
    if tool == "derate" {
        tpl = tpl.with_key(format!("{id}-key"));
    }
    let mut s = PlanStep::new(id, tpl);
    s.cost_estimate = cost;
    s
}

fn budget() -> Budget {
    Budget::unlimited().with_cost(100)
}

#[test]
fn empty_plan_is_valid() {
    let plan = Plan::new("p", "g", vec![]);
    assert_eq!(plan.total_cost_estimate, 0);
    assert_eq!(validate_plan(&plan, &registry(), &token(), &budget(), 0), Ok(()));
}

#[test]
fn forward_reference_dangles() {
    let plan = Plan::new(
        "p",
        "g",
        vec![
            step("E1", "query", json!({"asset": "T1"}), 1),
            step("E2", "assess", json!({"reading": "#E3.x"}), 1),
            step("E3", "query", json!({"asset": "T1"}), 1),
        ],
    );
    let errs = validate_plan(&plan, &registry(), &token(), &budget(), 0).unwrap_err();
    // Oracle: a reference is dangling iff its source is absent or not strictly earlier.
    let order: BTreeMap<&str, usize> = plan.steps.iter().enumerate().map(|(i, s)| (s.step_id.as_str(), i)).collect();
    let order = &order;
    let expected: Vec<(String, String)> = plan
        .steps
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            placeholders_in(&s.call_template.args)
                .into_iter()
                .filter(move |p| order.get(p.source_step.as_str()).is_none_or(|&j| j >= i))
                .map(move |p| (s.step_id.clone(), p.source_step))
        })
        .collect();
    let got: Vec<(String, String)> = errs
        .iter()
        .filter_map(|e| match e {
            PlanError::DanglingPlaceholder { step_id, reference, .. } => Some((step_id.clone(), reference.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(got, expected);
    assert_eq!(got, vec![("E2".to_string(), "E3".to_string())]);
}

#[test]
fn cost_over_budget_is_rejected() {
    let costs = [50u64, 40, 30];
    let steps: Vec<PlanStep> = costs
        .iter()
        .enumerate()
        .map(|(i, c)| step(&format!("E{}", i + 1), "query", json!({"asset": "T1"}), *c))
        .collect();
    let plan = Plan::new("p", "g", steps);
    let errs = validate_plan(&plan, &registry(), &token(), &budget(), 0).unwrap_err();
    let sum: u64 = costs.iter().sum();
    assert_eq!(errs, vec![PlanError::CostExceedsBudget { cost: sum, budget: 100 }]);
}

#[test]
fn declared_total_must_match_steps() {
    let mut plan = Plan::new("p", "g", vec![step("E1", "query", json!({"asset": "T1"}), 5)]);
    plan.total_cost_estimate = 4;
    let errs = validate_plan(&plan, &registry(), &token(), &budget(), 0).unwrap_err();
    assert_eq!(errs, vec![PlanError::TotalCostMismatch { declared: 4, computed: 5 }]);
}

#[test]
fn actuating_step_needs_compensation_and_cycles_are_found() {
    let mut a = step("A", "assess", json!({"reading": "#B.r"}), 1);
    a.preconditions.push("B.r exists".parse().unwrap());
    let b = step("B", "assess", json!({"reading": "#A.r"}), 1);
    let c = step("C", "derate", json!({"fraction": 0.2}), 1);
    let plan = Plan::new("p", "g", vec![a, b, c]);
    let errs = validate_plan(&plan, &registry(), &token(), &budget(), 0).unwrap_err();
    assert_eq!(
        errs[0],
        PlanError::CyclicPlan {
            steps: vec!["A".into(), "B".into()]
        }
    );
    assert!(errs.contains(&PlanError::MissingCompensation {
        step_id: "C".into(),
        tool: "derate".into()
    }));
}

#[test]
fn placeholder_fields_skip_type_checks_but_literals_do_not() {
    let mut d = step("E2", "derate", json!({"fraction": 0.9}), 1);
    d.compensation_template = Some(CallTemplate::new("restore", "1.0.0", json!({"asset": "T1"})).with_key("r"));
    let plan = Plan::new(
        "p",
        "g",
        vec![
            step("E1", "query", json!({"asset": "T1"}), 1),
            d,
            step("E3", "assess", json!({"reading": "#E1.value"}), 1),
        ],
    );
    let errs = validate_plan(&plan, &registry(), &token(), &budget(), 0).unwrap_err();
    assert_eq!(errs.len(), 1);
    assert!(matches!(&errs[0], PlanError::StepUnauthorized { step_id, .. } if step_id == "E2"));
}

#[test]
fn dry_run_consumes_no_invocations() {
    let mut t = token();
    t.max_invocations = 1;
    let plan = Plan::new(
        "p",
        "g",
        vec![
            step("E1", "query", json!({"asset": "T1"}), 1),
            step("E2", "query", json!({"asset": "T2"}), 1),
        ],
    );
    assert_eq!(validate_plan(&plan, &registry(), &t, &budget(), 0), Ok(()));
    assert_eq!(t.invocations_used, 0);
}

#[test]
fn guarded_source_must_share_guard() {
    let mut e3 = step("E3", "query", json!({"asset": "T1"}), 1);
    e3.guard = Some("E2.risk > 0.6".parse().unwrap());
    let mut e4 = step("E4", "assess", json!({"reading": "#E3.value"}), 1);
    let plan_bad = Plan::new(
        "p",
        "g",
        vec![step("E2", "query", json!({"asset": "T1"}), 1), e3.clone(), e4.clone()],
    );
    let errs = validate_plan(&plan_bad, &registry(), &token(), &budget(), 0).unwrap_err();
    assert!(matches!(&errs[0], PlanError::DanglingPlaceholder { step_id, .. } if step_id == "E4"));
    e4.guard = e3.guard.clone();
    let plan_ok = Plan::new("p", "g", vec![step("E2", "query", json!({"asset": "T1"}), 1), e3, e4]);
    assert_eq!(validate_plan(&plan_ok, &registry(), &token(), &budget(), 0), Ok(()));
}

#[test]
fn bind_without_placeholders_is_identity() {
    let s = step("E1", "query", json!({"asset": "T1", "n": [1, 2]}), 1);
    let call = bind_step(&s, &BTreeMap::new(), "c1", "planner").unwrap();
    assert_eq!(call.args, s.call_template.args);
    assert_eq!(call.origin.as_deref(), Some("E1"));
}

#[test]
fn bind_substitutes_values_verbatim() {
    let s = step("E2", "assess", json!({"reading": "#E1.risk", "raw": "#E1", "note": "plain"}), 1);
    let e1 = json!({"risk": 0.7});
    let outputs = BTreeMap::from([("E1".to_string(), e1.clone())]);
    let call = bind_step(&s, &outputs, "c2", "planner").unwrap();
    assert_eq!(call.args["reading"], e1["risk"]);
    assert_eq!(call.args["raw"], e1);
    assert_eq!(call.args["note"], "plain");
    assert!(placeholders_in(&call.args).is_empty());
}

#[test]
fn bind_reports_missing_paths_and_outputs() {
    let s = step("E2", "assess", json!({"reading": "#E1.risk"}), 1);
    let outputs = BTreeMap::from([("E1".to_string(), json!({"temp": 80}))]);
    assert_eq!(
        bind_step(&s, &outputs, "c", "p"),
        Err(BindError::PathNotFound("#E1.risk".into()))
    );
    assert_eq!(
        bind_step(&s, &BTreeMap::new(), "c", "p"),
        Err(BindError::MissingOutput("E1".into()))
    );
}

#[test]
fn plan_round_trips_through_json() {
    let mut s = step("E1", "derate", json!({"fraction": "#E0.f"}), 3);
    s.guard = Some("E0.risk >= 0.5".parse().unwrap());
    s.compensation_template = Some(CallTemplate::new("restore", "1.0.0", json!({})).with_key("k"));
    let plan = Plan::new("p", "g", vec![s]);
    let text = serde_json::to_string(&plan).unwrap();
    let back: Plan = serde_json::from_str(&text).unwrap();
    assert_eq!(back, plan);
}

struct Harness {
    gateway: Gateway,
    registry: Arc<ToolRegistry>,
    counter: Arc<CountingAdapter>,
}

fn react_harness() -> Harness {
    let registry = Arc::new(registry());
    let mut gateway = Gateway::new(registry.clone(), GatewayConfig::default(), LogicalClock::new());
    let counter = Arc::new(CountingAdapter::new(Arc::new(ScriptedAdapter::new(vec![AdapterReply::ok(
        json!({"value": 81.5}),
        1,
    )]))));
    gateway.register_adapter("query", "1.0.0", counter.clone()).unwrap();
    let derate = Arc::new(ScriptedAdapter::new(vec![AdapterReply::ok(json!({}), 1)]));
    gateway.register_adapter("derate", "1.0.0", derate).unwrap();
    Harness { gateway, registry, counter }
}

fn governor(h: &Harness) -> ContractGovernor<'_> {
    ContractGovernor {
        registry: &h.registry,
        gateway: &h.gateway,
        token: token(),
        clock: h.gateway.clock().clone(),
        seed: 1,
    }
}

fn query(id: &str) -> Proposal {
    Proposal::Action(ToolCall::new(id, "query", "1.0.0", json!({"asset": "T1"}), "planner"))
}

#[test]
fn looping_proposer_halts_at_step_cap() {
    for cap in [0u64, 1, 5, 9] {
        let h = react_harness();
        let mut gov = governor(&h);
        let mut proposer = ScriptedProposer::looping(Proposal::Thought("again".into()));
        let mut state = ReactState::new();
        let why = run_react(&mut state, &mut proposer, &mut gov, &Budget::steps(cap), 0, &NullSink).unwrap();
        assert_eq!(why.code, StopCode::BudgetExceeded);
        assert_eq!(state.steps_taken, cap);
        assert_eq!(state.transcript.len() as u64, cap);
    }
}

#[test]
fn ill_typed_action_is_refused_then_proposer_is_asked_again() {
    let h = react_harness();
    let mut gov = governor(&h);
    let bad = Proposal::Action(ToolCall::new("c1", "query", "1.0.0", json!({"asset": 7}), "planner"));
    let hallucinated = Proposal::Action(ToolCall::new("c2", "telepathy", "1.0.0", json!({}), "planner"));
    let mut proposer = ScriptedProposer::sequence(vec![
        bad,
        hallucinated,
        query("c3"),
        Proposal::Finish(json!("done")),
    ]);
    let mut state = ReactState::new();
    let rec = Recorder::new(HashAlgorithm::Sha256, LogicalClock::new());
    let why = run_react(&mut state, &mut proposer, &mut gov, &Budget::steps(10), 0, &rec).unwrap();
    assert_eq!(why.code, StopCode::GoalSatisfied);
    let kinds: Vec<EntryKind> = state.transcript.iter().map(|e| e.kind).collect();
    assert_eq!(
        kinds,
        vec![
            EntryKind::Refusal,
            EntryKind::Refusal,
            EntryKind::Action,
            EntryKind::Observation,
            EntryKind::Thought
        ]
    );
    assert!(transcript_well_formed(&state.transcript));
    assert_eq!(h.counter.invocations(), 1);
    assert_eq!(h.counter.seen_args(), vec![json!({"asset": "T1"})]);
    assert!(rec.events().iter().any(|e| e.kind == EventKind::ReactEntry));
}

#[test]
fn fourth_consecutive_refusal_halts() {
    let h = react_harness();
    let mut gov = governor(&h);
    let bad = Proposal::Action(ToolCall::new("c", "query", "1.0.0", json!({}), "planner"));
    let mut proposer = ScriptedProposer::looping(bad);
    let mut state = ReactState::new();
    let why = run_react(&mut state, &mut proposer, &mut gov, &Budget::steps(50), 0, &NullSink).unwrap();
    assert_eq!(why.code, StopCode::VerifierRejection);
    assert_eq!(state.steps_taken, u64::from(MAX_REPROPOSALS) + 1);
    assert_eq!(h.counter.invocations(), 0);
}

#[test]
fn unsimulated_actuation_is_a_governed_refusal() {
    let h = react_harness();
    let mut gov = governor(&h);
    let derate = Proposal::Action(ToolCall::new("c", "derate", "1.0.0", json!({"fraction": 0.2}), "planner").with_key("k"));
    let mut proposer = ScriptedProposer::sequence(vec![derate]);
    let mut state = ReactState::new();
    let next = react_step(&mut state, &mut proposer, &mut gov, &Budget::steps(5), 0, &NullSink).unwrap();
    assert!(matches!(next, ReactNext::Refused { ref reasons } if reasons == &vec![crate::gateway::SIMULATION_GATE_UNSATISFIED.to_string()]));
}

#[test]
fn readonly_query_is_dispatched() {
    let h = react_harness();
    let mut gov = governor(&h);
    let mut proposer = ScriptedProposer::sequence(vec![query("c1")]);
    let mut state = ReactState::new();
    let next = react_step(&mut state, &mut proposer, &mut gov, &Budget::steps(5), 0, &NullSink).unwrap();
    assert!(matches!(next, ReactNext::Dispatched { .. }));
    assert_eq!(state.transcript.last().unwrap().kind, EntryKind::Observation);
}

#[test]
fn state_hash_scripting_and_exhaustion() {
    let h = react_harness();
    let mut gov = governor(&h);
    let mut proposer = ScriptedProposer::default();
    proposer
        .by_state
        .insert(ReactState::new().state_hash().to_hex(), Proposal::Thought("first".into()));
    let mut state = ReactState::new();
    react_step(&mut state, &mut proposer, &mut gov, &Budget::steps(5), 0, &NullSink).unwrap();
    let err = react_step(&mut state, &mut proposer, &mut gov, &Budget::steps(5), 0, &NullSink).unwrap_err();
    assert!(matches!(err, ProposerError::NoProposal(_)));
}

fn node(label: &str) -> Value {
    json!({ "n": label })
}

#[test]
fn zero_expansions_returns_root() {
    let tree = ScriptedSearch::default();
    let out = search(node("root"), &tree, &tree, &SearchBudget::new(0, 5, 2), &NullSink);
    assert_eq!(out.best.node_id, 0);
    assert_eq!(out.why_stopped.code, StopCode::BudgetExhausted);
    assert_eq!(out.expansions, 0);
}

#[test]
fn all_infeasible_children_is_a_contradiction() {
    let mut tree = ScriptedSearch::default();
    tree.score_node(&node("root"), Some(0.0));
    for c in ["a", "b", "c"] {
        tree.add_child(&node("root"), node(c), None);
    }
    let out = search(node("root"), &tree, &tree, &SearchBudget::new(10, 5, 2), &NullSink);
    assert_eq!(out.why_stopped.code, StopCode::Contradiction);
    assert_eq!(out.best.node_id, 0);
    assert_eq!(out.explored.len(), 4);
}

#[test]
fn two_level_unique_maximum_with_beam_two() {
    let mut tree = ScriptedSearch::default();
    tree.score_node(&node("r"), Some(0.0));
    let scores = [("a", 0.5), ("b", 0.9), ("c", 0.1)];
    let grand = [("a", "a1", 0.4), ("a", "a2", 0.95), ("b", "b1", 0.2), ("c", "c1", 0.99)];
    for (c, s) in scores {
        tree.add_child(&node("r"), node(c), Some(s));
    }
    for (p, c, s) in grand {
        tree.add_child(&node(p), node(c), Some(s));
    }
    let out = search(node("r"), &tree, &tree, &SearchBudget::new(100, 2, 2), &NullSink);
    // c is pruned by the beam, so its child is out of reach; a2 is the best reachable.
    assert_eq!(out.best.content, node("a2"));
    let wide = search(node("r"), &tree, &tree, &SearchBudget::new(100, 2, 10), &NullSink);
    assert_eq!(wide.best.content, node("c1"));
}

/// Random tree of at most `n` nodes with distinct scores; some nodes infeasible.
fn random_tree(seed: u64, n: usize) -> (ScriptedSearch, Vec<(Value, Option<f64>, u32)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tree = ScriptedSearch::default();
    let root = node("0");
    let root_score = Some(rng.gen_range(0.0..1.0));
    tree.score_node(&root, root_score);
    let mut nodes = vec![(root, root_score, 0u32)];
    let target = rng.gen_range(1..=n);
    while nodes.len() < target {
        let parent = rng.gen_range(0..nodes.len());
        let (pv, _, pd) = nodes[parent].clone();
        let child = node(&nodes.len().to_string());
        let score = if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0.0..1.0)) };
        tree.add_child(&pv, child.clone(), score);
        nodes.push((child, score, pd + 1));
    }
    (tree, nodes)
}

/// Best feasible node reachable through feasible ancestors; the root always counts.
fn exhaustive_best(tree: &ScriptedSearch, root: &Value) -> (Value, f64) {
    let mut best = (root.clone(), tree.score(root));
    let mut stack = vec![root.clone()];
    while let Some(v) = stack.pop() {
        for c in tree.children(&SearchNode {
            node_id: 0,
            content: v.clone(),
            score: 0.0,
            feasible: true,
            parent: None,
            depth: 0,
        }) {
            if let Score::Feasible(s) = tree.score(&c) {
                let better = match best.1 {
                    Score::Feasible(b) => s > b,
                    Score::Infeasible => true,
                };
                if better {
                    best = (c.clone(), Score::Feasible(s));
                }
                stack.push(c);
            }
        }
    }
    let s = match best.1 {
        Score::Feasible(s) => s,
        Score::Infeasible => f64::NAN,
    };
    (best.0, s)
}

#[test]
fn wide_beam_matches_exhaustive_enumeration() {
    for seed in 0..200 {
        let (tree, nodes) = random_tree(seed, 100);
        let n = nodes.len() as u64;
        let budget = SearchBudget::new(n, n as u32 + 1, n as usize).with_window(n as u32 + 1);
        let out = search(node("0"), &tree, &tree, &budget, &NullSink);
        let (want, _) = exhaustive_best(&tree, &node("0"));
        assert_eq!(out.best.content, want, "seed {seed}");
        assert!(out.expansions <= budget.max_expansions);
        for c in &out.explored {
            if let Some(p) = c.parent {
                assert_eq!(c.depth, out.explored[p as usize].depth + 1);
            }
        }
    }
}

#[test]
fn search_is_deterministic_and_logged() {
    let (tree, _) = random_tree(42, 60);
    let budget = SearchBudget::new(20, 6, 3);
    let r1 = Recorder::new(HashAlgorithm::Sha256, LogicalClock::new());
    let r2 = Recorder::new(HashAlgorithm::Sha256, LogicalClock::new());
    let a = search(node("0"), &tree, &tree, &budget, &r1);
    let b = search(node("0"), &tree, &tree, &budget, &r2);
    assert_eq!(a, b);
    let chain = |r: &Recorder| r.events().last().unwrap().chain_hash;
    assert_eq!(chain(&r1), chain(&r2));
    assert_eq!(r1.events().last().unwrap().kind, EventKind::SearchStopped);
}
