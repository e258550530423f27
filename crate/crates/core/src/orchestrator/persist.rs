use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::prompts::PROMPT_VERSION;
use crate::memory::{LongTermMemory, OrchestratorConfig};

use super::{ExitReason, OrchestratorError, TaskRun, Trajectory};

pub const TRAJECTORY_FILE: &str = "trajectory.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MEMORY_AFTER_FILE: &str = "memory_after.json";
pub const SCREENSHOT_DIR: &str = "screenshots";

pub(crate) fn screenshot_path(index: usize) -> String {
    format!("{SCREENSHOT_DIR}/screen_{index:03}.png")
}

/// Wall-clock time of one step. Kept out of the trajectory so trajectories
/// stay byte-stable across runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTiming {
    pub index: usize,
    pub millis: u64,
}

impl StepTiming {
    pub(crate) fn since(index: usize, started: Instant) -> Self {
        Self {
            index,
            millis: started.elapsed().as_millis() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub task_id: String,
    pub prompt_version: String,
    pub config: OrchestratorConfig,
    pub memory_hash_before: String,
    pub memory_hash_after: String,
    pub exit_reason: ExitReason,
    pub iterations: usize,
    pub device_operations: usize,
    pub screenshots: usize,
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), OrchestratorError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Writes a task's artifacts into `dir`, creating it if needed.
pub fn write_task_dir(
    dir: &Path,
    run: &TaskRun,
    config: &OrchestratorConfig,
    memory_before: &LongTermMemory,
    memory_after: &LongTermMemory,
) -> Result<Manifest, OrchestratorError> {
    let shots = dir.join(SCREENSHOT_DIR);
    fs::create_dir_all(&shots).map_err(io_err(&shots))?;
    for (i, image) in run.screens.iter().enumerate() {
        let path: PathBuf = dir.join(screenshot_path(i));
        let bytes = image.read_bytes().map_err(io_err(&path))?;
        write_file(&path, bytes)?;
    }
    write_file(&dir.join(TRAJECTORY_FILE), run.trajectory.to_json_string())?;
    write_file(
        &dir.join(TIMINGS_FILE),
        serde_json::to_string_pretty(&run.timings).expect("timings serialize") + "\n",
    )?;
    write_file(&dir.join(AUDIT_FILE), run.audit.to_jsonl())?;
    write_file(&dir.join(MEMORY_AFTER_FILE), memory_after.to_file_string())?;

    let manifest = Manifest {
        task_id: run.trajectory.task_id.clone(),
        prompt_version: PROMPT_VERSION.to_string(),
        config: config.clone(),
        memory_hash_before: memory_before.content_hash(),
        memory_hash_after: memory_after.content_hash(),
        exit_reason: run.trajectory.exit_reason,
        iterations: run.trajectory.iterations(),
        device_operations: run.trajectory.device_operations(),
        screenshots: run.screens.len(),
    };
    write_file(
        &dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest).expect("manifests serialize") + "\n",
    )?;
    Ok(manifest)
}

/// Reads `trajectory.json` from a task directory, or a trajectory file directly.
pub fn read_trajectory(path: &Path) -> Result<Trajectory, OrchestratorError> {
    let file = if path.is_dir() {
        path.join(TRAJECTORY_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(io_err(&file))?;
    serde_json::from_str(&text).map_err(|source| OrchestratorError::Decode {
        path: file.display().to_string(),
        source,
    })
}
