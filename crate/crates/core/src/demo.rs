//! The bundled demo phone, scenario and script book.

use std::sync::Arc;

use crate::device::{AppGraph, SimDevice};
use crate::gateway::ScriptBook;
use crate::orchestrator::Scenario;

pub const GRAPH_JSON: &str = include_str!("../data/graphs/demo_phone.json");
pub const SCENARIO_JSON: &str = include_str!("../data/scenarios/demo.json");
pub const SCRIPT_JSON: &str = include_str!("../data/scenarios/demo.script.json");

/// Search, Notes, Shop, Maps and Feed apps on a 1080x2400 screen.
pub fn graph() -> Arc<AppGraph> {
    Arc::new(AppGraph::from_json_str(GRAPH_JSON).expect("bundled graph is valid"))
}

pub fn device() -> SimDevice {
    SimDevice::new(graph())
}

/// Five tasks, one per app.
pub fn scenario() -> Scenario {
    Scenario::from_json_str(SCENARIO_JSON).expect("bundled scenario is valid")
}

/// Scripted model responses that drive [`scenario`] to completion.
pub fn script() -> ScriptBook {
    ScriptBook::from_json_str(SCRIPT_JSON).expect("bundled script is valid")
}
