//! Two failed actions in a row hand the error records to the Manager.
//!
//! cargo run --example error_escalation

use std::sync::Arc;

use phoneagent::agents::seed_memory;
use phoneagent::device::{AppGraph, SimDevice};
use phoneagent::gateway::{AgentRole, MatchKey, ScriptBook, ScriptedBackend};
use phoneagent::memory::{OrchestratorConfig, TaskQuery};
use phoneagent::orchestrator::{run_task, TaskContext};
use phoneagent::perception::SimPerceptor;

const GRAPH: &str = r#"{"name": "one page", "screen": {"width": 200, "height": 400},
    "pages": [{"name": "home", "elements": []}]}"#;

fn reflection(outcome: &str) -> String {
    if outcome == "A" {
        return "OUTCOME: A\nERROR_DESCRIPTION: None\nSUSPECTED_CAUSE: None\nSUGGESTED_FIX: None\nPROGRESS: ok".into();
    }
    format!(
        "OUTCOME: {outcome}\nERROR_DESCRIPTION: the tap hit nothing\nSUSPECTED_CAUSE: wrong spot\nSUGGESTED_FIX: look again\nPROGRESS: stuck"
    )
}

fn main() -> anyhow::Result<()> {
    let mut book = ScriptBook::new();
    book.push(
        AgentRole::Manager,
        MatchKey::always(),
        "THOUGHT: Keep going.\nPLAN: 1. Tap the button\nSUBGOAL: Tap the button",
    );
    book.push(AgentRole::Notetaker, MatchKey::always(), "NOTES: None");
    let verdicts = ["A", "C", "B", "A"];
    for (i, v) in verdicts.iter().enumerate() {
        let action = format!("Tap({}, 100)", 20 + 10 * i);
        book.push(
            AgentRole::Operator,
            MatchKey::step(i + 1),
            format!("THOUGHT: Try.\nACTION: {action}\nEXPECTATION: Something opens."),
        );
        book.push(AgentRole::ActionReflector, MatchKey::step(i + 1), reflection(v));
    }
    book.push(
        AgentRole::Operator,
        MatchKey::step(verdicts.len() + 1),
        "THOUGHT: Done.\nACTION: Stop(\"gave up politely\")\nEXPECTATION: None",
    );

    let config = OrchestratorConfig::default();
    let backend = ScriptedBackend::new(book);
    let perceptor = SimPerceptor::new();
    let ctx = TaskContext {
        config: &config,
        perceptor: &perceptor,
        backend: &backend,
    };
    let mut device = SimDevice::new(Arc::new(AppGraph::from_json_str(GRAPH)?));
    let query = TaskQuery {
        id: "escalate".into(),
        scenario: String::new(),
        apps: Vec::new(),
        query: "Tap the button.".into(),
    };
    let run = run_task(&query, ctx, &mut device, &seed_memory());
    println!("k = {}", config.k_escalation);
    for step in &run.trajectory.steps {
        println!(
            "step {}: escalated={} outcome={}",
            step.index,
            step.escalated,
            step.outcome.map_or("-", |o| o.label())
        );
    }
    println!("exit: {:?}", run.trajectory.exit_reason);
    Ok(())
}
