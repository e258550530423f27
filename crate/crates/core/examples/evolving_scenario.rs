//! Runs the five bundled tasks in order with evolution on. Tips and
//! shortcuts learned after each task are visible to the next one.
//!
//! cargo run --example evolving_scenario

use phoneagent::agents::seed_memory;
use phoneagent::demo;
use phoneagent::device::Device;
use phoneagent::gateway::ScriptedBackend;
use phoneagent::memory::{OrchestratorConfig, TaskQuery};
use phoneagent::orchestrator::{run_scenario, ScenarioOptions, TaskContext};
use phoneagent::perception::SimPerceptor;

fn main() -> anyhow::Result<()> {
    let config = OrchestratorConfig::default();
    let backend = ScriptedBackend::new(demo::script());
    let perceptor = SimPerceptor::new();
    let ctx = TaskContext {
        config: &config,
        perceptor: &perceptor,
        backend: &backend,
    };
    let mut devices = |_: &TaskQuery| Ok(Box::new(demo::device()) as Box<dyn Device>);
    let start = seed_memory();
    println!(
        "seed: {} tips, {} shortcuts",
        start.tips().len(),
        start.shortcuts().len()
    );

    let options = ScenarioOptions {
        evolve: true,
        memory_path: None,
        out_dir: None,
    };
    let result = run_scenario(&demo::scenario(), ctx, &mut devices, start, &options)?;
    for (run, evo) in result.runs.iter().zip(&result.evolutions) {
        let t = &run.trajectory;
        println!("{}: {:?} after {} steps", t.task_id, t.exit_reason, t.iterations());
        println!("  +{} tips, admitted {:?}", evo.new_tips, evo.admitted);
        for r in &evo.rejected {
            println!("  rejected {r:?}");
        }
        for w in &evo.warnings {
            println!("  warning: {w}");
        }
    }
    let m = &result.memory;
    println!(
        "final: {} tips, {} shortcuts, hash {}",
        m.tips().len(),
        m.shortcuts().len(),
        m.content_hash()
    );
    Ok(())
}
