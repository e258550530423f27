//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod criteria;

use std::path::Path;
use std::sync::Arc;

use phoneagent::agents::seed_memory;
use phoneagent::demo;
use phoneagent::device::{AppGraph, Device, SimDevice};
use phoneagent::gateway::{AgentRole, AuditEntry, MatchKey, ScriptBook, ScriptedBackend};
use phoneagent::memory::{LongTermMemory, OrchestratorConfig, Outcome, TaskQuery};
use phoneagent::orchestrator::{run_scenario, run_task, ScenarioOptions, ScenarioRun, TaskContext, TaskRun};
use phoneagent::perception::SimPerceptor;

pub fn manager_reply(subgoal: &str) -> String {
    format!("THOUGHT: Keep going.\nPLAN: 1. {subgoal}\nSUBGOAL: {subgoal}")
}

pub fn operator_reply(action: &str) -> String {
    format!("THOUGHT: Act.\nACTION: {action}\nEXPECTATION: The screen changes.")
}

pub fn reflector_reply(outcome: Outcome) -> String {
    match outcome {
        Outcome::A => "OUTCOME: A\nERROR_DESCRIPTION: None\nSUSPECTED_CAUSE: None\nSUGGESTED_FIX: None\nPROGRESS: ok".into(),
        other => format!(
            "OUTCOME: {}\nERROR_DESCRIPTION: outcome {} observed\nSUSPECTED_CAUSE: unknown\nSUGGESTED_FIX: try again\nPROGRESS: stuck",
            other.label(),
            other.label()
        ),
    }
}

pub const NOTES_REPLY: &str = "NOTES: None";

/// Script entries for one task. A role is scripted either with `always` or
/// with one `at` entry per call, never both.
pub struct ScriptBuilder {
    pub book: ScriptBook,
    task: String,
}

impl ScriptBuilder {
    pub fn new(task: &str) -> Self {
        Self {
            book: ScriptBook::new(),
            task: task.to_string(),
        }
    }

    pub fn always(&mut self, role: AgentRole, reply: impl Into<String>) -> &mut Self {
        self.book
            .push(role, MatchKey::always().for_task(self.task.clone()), reply);
        self
    }

    pub fn at(&mut self, role: AgentRole, step: usize, reply: impl Into<String>) -> &mut Self {
        self.book
            .push(role, MatchKey::step(step).for_task(self.task.clone()), reply);
        self
    }

    /// Manager and notetaker answer every call the same way.
    pub fn with_defaults(&mut self) -> &mut Self {
        self.always(AgentRole::Manager, manager_reply("Do the task"))
            .always(AgentRole::Notetaker, NOTES_REPLY)
    }

    pub fn build(&mut self) -> ScriptBook {
        std::mem::take(&mut self.book)
    }
}

/// Joins several books into one.
pub fn merge(books: impl IntoIterator<Item = ScriptBook>) -> ScriptBook {
    let mut all = ScriptBook::new();
    for b in books {
        all.entries.extend(b.entries);
    }
    all
}

pub fn run_single(
    graph: Arc<AppGraph>,
    config: &OrchestratorConfig,
    book: ScriptBook,
    query: &TaskQuery,
    memory: &LongTermMemory,
) -> (TaskRun, SimDevice) {
    let backend = ScriptedBackend::new(book);
    let perceptor = SimPerceptor::new();
    let ctx = TaskContext {
        config,
        perceptor: &perceptor,
        backend: &backend,
    };
    let mut device = SimDevice::new(graph);
    let run = run_task(query, ctx, &mut device, memory);
    (run, device)
}

/// One page, no apps, on a small screen so rendering stays cheap.
pub fn blank_graph() -> Arc<AppGraph> {
    Arc::new(
        AppGraph::from_json_str(
            r#"{"name": "blank", "screen": {"width": 200, "height": 400},
                "pages": [{"name": "home", "elements": []}]}"#,
        )
        .unwrap(),
    )
}

pub fn run_demo(evolve: bool, memory: LongTermMemory, memory_path: Option<&Path>, out: Option<&Path>) -> ScenarioRun {
    run_demo_with(evolve, memory, memory_path, out, &mut |_| {})
}

/// Runs the bundled scenario; `before_task` sees each task just before its
/// device session opens.
pub fn run_demo_with(
    evolve: bool,
    memory: LongTermMemory,
    memory_path: Option<&Path>,
    out: Option<&Path>,
    before_task: &mut dyn FnMut(&TaskQuery),
) -> ScenarioRun {
    let config = OrchestratorConfig::default();
    let backend = ScriptedBackend::new(demo::script());
    let perceptor = SimPerceptor::new();
    let ctx = TaskContext {
        config: &config,
        perceptor: &perceptor,
        backend: &backend,
    };
    let mut devices = |q: &TaskQuery| {
        before_task(q);
        Ok(Box::new(demo::device()) as Box<dyn Device>)
    };
    run_scenario(
        &demo::scenario(),
        ctx,
        &mut devices,
        memory,
        &ScenarioOptions {
            evolve,
            memory_path,
            out_dir: out,
        },
    )
    .expect("demo scenario runs")
}

pub fn demo_seed() -> LongTermMemory {
    seed_memory()
}

pub fn requests_of(run: &TaskRun, role: AgentRole) -> Vec<&AuditEntry> {
    run.audit.by_caller(role).collect()
}
