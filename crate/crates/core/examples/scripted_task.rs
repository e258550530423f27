//! Runs one task of the bundled scenario against the simulator with
//! scripted model responses, then prints the trajectory.
//!
//! cargo run --example scripted_task [OUT_DIR]

use phoneagent::agents::seed_memory;
use phoneagent::demo;
use phoneagent::gateway::ScriptedBackend;
use phoneagent::memory::OrchestratorConfig;
use phoneagent::orchestrator::{run_task, write_task_dir, TaskContext};
use phoneagent::perception::SimPerceptor;

fn main() -> anyhow::Result<()> {
    let scenario = demo::scenario();
    let query = &scenario.tasks[0];
    let config = OrchestratorConfig::default();
    let backend = ScriptedBackend::new(demo::script());
    let perceptor = SimPerceptor::new();
    let ctx = TaskContext {
        config: &config,
        perceptor: &perceptor,
        backend: &backend,
    };
    let mut phone = demo::device();
    let run = run_task(query, ctx, &mut phone, &seed_memory());

    println!("{}: {}", query.id, query.query);
    for step in &run.trajectory.steps {
        let action = step
            .action
            .as_ref()
            .map_or("(none)".to_string(), |a| serde_json::to_string(a).unwrap_or_default());
        let outcome = step.outcome.map_or("-", |o| o.label());
        println!("  {} [{outcome}] {}  {action}", step.index, step.subgoal);
    }
    println!("exit: {:?} {}", run.trajectory.exit_reason, run.trajectory.exit_detail);
    println!("model calls: {}", run.audit.entries.len());
    if let Some(dir) = std::env::args().nth(1) {
        let memory = seed_memory();
        write_task_dir(std::path::Path::new(&dir), &run, &config, &memory, &memory)?;
        println!("wrote {dir}");
    }
    Ok(())
}
