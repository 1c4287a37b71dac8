//! The fixed diagnosis plan: query telemetry, simulate, and, when the
//! predicted risk exceeds the policy threshold, derate and book service.

use serde_json::json;

use super::config::ScenarioConfig;
use super::tools::TOOL_VERSION;
use crate::planner::{CallTemplate, Plan, PlanStep};
use crate::predicate::{CompareOp, Predicate};

fn pred(path: &str, op: CompareOp, value: serde_json::Value) -> Predicate {
    Predicate::new(path, op, Some(value))
}

pub fn diagnosis_plan(cfg: &ScenarioConfig) -> Plan {
    let ep = &cfg.episode_id;
    let asset = &cfg.asset;
    let key = |step: &str| format!("{ep}-{step}");
    let threshold = cfg.supervisor_policy.risk_threshold;
    let high_risk = pred("E2.risk", CompareOp::Gt, json!(threshold));

    let mut e1 = PlanStep::new(
        "E1",
        CallTemplate::new(
            "telemetry_query",
            TOOL_VERSION,
            json!({"asset": asset, "window_min": cfg.telemetry_window}),
        )
        .with_key(key("E1")),
    );
    e1.description = "Retrieve the recent thermal series".into();
    e1.cost_estimate = 1;

    let mut e2 = PlanStep::new(
        "E2",
        CallTemplate::new("twin_simulate", TOOL_VERSION, json!({"features": "#E1.features"})).with_key(key("E2")),
    );
    e2.description = "Predict failure risk on the digital twin".into();
    e2.postconditions = vec![
        pred("E2.risk", CompareOp::Ge, json!(0.0)),
        pred("E2.risk", CompareOp::Le, json!(1.0)),
    ];
    e2.cost_estimate = 2;

    let mut e3 = PlanStep::new(
        "E3",
        CallTemplate::new(
            "derate_command",
            TOOL_VERSION,
            json!({"asset": asset, "fraction": cfg.derate_fraction}),
        )
        .with_key(key("E3")),
    );
    e3.description = "Apply a reversible derate".into();
    e3.guard = Some(high_risk.clone());
    e3.compensation_template =
        Some(CallTemplate::new("restore_command", TOOL_VERSION, json!({"asset": asset})).with_key(key("E3-undo")));
    e3.cost_estimate = 3;

    let mut e4 = PlanStep::new(
        "E4",
        CallTemplate::new(
            "schedule_service",
            TOOL_VERSION,
            json!({"asset": asset, "priority": "high", "reason": "predicted over-temperature risk"}),
        )
        .with_key(key("E4")),
    );
    e4.description = "Raise a priority service ticket".into();
    e4.guard = Some(high_risk);
    e4.compensation_template = Some(
        CallTemplate::new(
            "cancel_service",
            TOOL_VERSION,
            json!({"asset": asset, "request_key": key("E4")}),
        )
        .with_key(key("E4-undo")),
    );
    e4.cost_estimate = 2;

    Plan::new(format!("{ep}-plan"), cfg.goal.goal_id.clone(), vec![e1, e2, e3, e4])
}
