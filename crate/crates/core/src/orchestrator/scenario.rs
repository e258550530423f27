use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{evolve_shortcuts, evolve_tips, EvolutionInput, ModelSession, Rejection};
use crate::device::{Device, DeviceError};
use crate::gateway::ModelBackend;
use crate::memory::{save_memory, LongTermMemory, TaskQuery};

use super::persist::{io_err, write_file};
use super::{run_task, write_task_dir, ExitReason, OrchestratorError, TaskContext, TaskRun};

/// An ordered list of tasks run against one evolving memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub tasks: Vec<TaskQuery>,
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self, OrchestratorError> {
        let s: Scenario = serde_json::from_str(text).map_err(|source| OrchestratorError::Decode {
            path: "<scenario>".into(),
            source,
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json_str(&text).map_err(|e| match e {
            OrchestratorError::Decode { source, .. } => OrchestratorError::Decode {
                path: path.display().to_string(),
                source,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.tasks.is_empty() {
            return Err(OrchestratorError::Scenario("scenario has no tasks".into()));
        }
        let mut seen = BTreeSet::new();
        for t in &self.tasks {
            if t.query.trim().is_empty() {
                return Err(OrchestratorError::Scenario(format!(
                    "task `{}` has an empty query",
                    t.id
                )));
            }
            if !seen.insert(t.id.as_str()) {
                return Err(OrchestratorError::Scenario(format!("duplicate task id `{}`", t.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioOptions<'a> {
    /// Run the experience reflectors after each task.
    pub evolve: bool,
    /// Where to persist memory after each task. Only written when evolving.
    pub memory_path: Option<&'a Path>,
    /// Root for per-task artifact directories.
    pub out_dir: Option<&'a Path>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolutionSummary {
    pub task_id: String,
    pub new_tips: usize,
    pub admitted: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<Rejection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub runs: Vec<TaskRun>,
    /// One per task when evolving, otherwise empty.
    pub evolutions: Vec<EvolutionSummary>,
    pub memory: LongTermMemory,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    task_id: &'a str,
    dir: String,
    exit_reason: ExitReason,
    iterations: usize,
    device_operations: usize,
    memory_hash_after: String,
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    evolve: bool,
    tasks: Vec<SummaryRow<'a>>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    evolutions: &'a [EvolutionSummary],
}

/// Runs the tip reflector, then the shortcut reflector, on a finished task.
/// Reflector failures are reported as warnings and leave memory as it was.
/// The requests land in the task's audit log after its last step.
pub fn evolve_after_task(
    run: &mut TaskRun,
    future: &[TaskQuery],
    backend: &dyn ModelBackend,
    memory: &mut LongTermMemory,
) -> EvolutionSummary {
    let mut summary = EvolutionSummary {
        task_id: run.query.id.clone(),
        ..Default::default()
    };
    let mut session = ModelSession::new(backend, &mut run.audit).for_task(run.query.id.clone());
    session.step = run.trajectory.iterations();
    let input = EvolutionInput {
        query: &run.query,
        plan: &run.working.plan,
        progress: &run.working.progress,
        actions: run.working.action_history(),
        errors: run.working.error_history(),
        future,
    };
    match evolve_tips(&mut session, &input, memory) {
        Ok(n) => summary.new_tips = n,
        Err(e) => {
            log::warn!("tip evolution after {} failed: {e}", run.query.id);
            summary.warnings.push(format!("tip reflector: {e}"));
        }
    }
    match evolve_shortcuts(&mut session, &input, memory) {
        Ok(report) => {
            summary.admitted = report.admitted;
            summary.rejected = report.rejected;
        }
        Err(e) => {
            log::warn!("shortcut evolution after {} failed: {e}", run.query.id);
            summary.warnings.push(format!("shortcut reflector: {e}"));
        }
    }
    summary
}

/// Opens a device session for one task.
pub type DeviceFactory<'a> = dyn FnMut(&TaskQuery) -> Result<Box<dyn Device>, DeviceError> + 'a;

/// Runs every task in order against a fresh device session from `devices`.
/// With evolution on, memory is updated after each task and the next task
/// sees the result; with it off, every task sees the starting memory.
pub fn run_scenario(
    scenario: &Scenario,
    ctx: TaskContext<'_>,
    devices: &mut DeviceFactory<'_>,
    memory: LongTermMemory,
    options: &ScenarioOptions<'_>,
) -> Result<ScenarioRun, OrchestratorError> {
    scenario.validate()?;
    let mut memory = memory;
    let mut runs = Vec::new();
    let mut evolutions = Vec::new();
    let mut rows = Vec::new();

    for (i, query) in scenario.tasks.iter().enumerate() {
        let before = memory.clone();
        let mut run = match devices(query) {
            Ok(mut device) => run_task(query, ctx, device.as_mut(), &memory),
            Err(e) => {
                log::error!("cannot open a device session for {}: {e}", query.id);
                TaskRun::failed(query, e.to_string())
            }
        };
        log::info!(
            "task {} finished: {} after {} step(s)",
            query.id,
            run.trajectory.exit_reason,
            run.trajectory.iterations()
        );

        if options.evolve {
            let summary = evolve_after_task(&mut run, &scenario.tasks[i + 1..], ctx.backend, &mut memory);
            evolutions.push(summary);
            if let Some(path) = options.memory_path {
                save_memory(&memory, path)?;
            }
        }

        if let Some(root) = options.out_dir {
            let dir_name = format!("{:02}_{}", i + 1, query.id);
            let manifest = write_task_dir(&root.join(&dir_name), &run, ctx.config, &before, &memory)?;
            rows.push(SummaryRow {
                task_id: &query.id,
                dir: dir_name,
                exit_reason: manifest.exit_reason,
                iterations: manifest.iterations,
                device_operations: manifest.device_operations,
                memory_hash_after: manifest.memory_hash_after,
            });
        }
        runs.push(run);
    }

    if let Some(root) = options.out_dir {
        let summary = Summary {
            scenario: &scenario.name,
            evolve: options.evolve,
            tasks: rows,
            evolutions: &evolutions,
        };
        write_file(
            &root.join("summary.json"),
            serde_json::to_string_pretty(&summary).expect("summaries serialize") + "\n",
        )?;
    }

    Ok(ScenarioRun {
        runs,
        evolutions,
        memory,
    })
}
