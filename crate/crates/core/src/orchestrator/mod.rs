//! The per-task agent loop, termination rules, trajectory recording and the
//! cross-task evolution protocol.

mod persist;
mod run;
mod scenario;

use serde::{Deserialize, Serialize};

use crate::memory::{Action, ActionRecord, ErrorRecord, OrchestratorConfig, Outcome};
use crate::perception::PerceptionResult;
use crate::shortcut::GateDecision;

pub use persist::{
    read_trajectory, write_task_dir, Manifest, StepTiming, AUDIT_FILE, MANIFEST_FILE, MEMORY_AFTER_FILE,
    SCREENSHOT_DIR, TIMINGS_FILE, TRAJECTORY_FILE,
};
pub use run::{run_task, TaskContext, TaskRun};
pub use scenario::{
    evolve_after_task, run_scenario, DeviceFactory, EvolutionSummary, Scenario, ScenarioOptions, ScenarioRun,
};

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Memory(#[from] crate::memory::MemoryError),
}

/// How a task ended. Only `SelfReportedSuccess` is a clean exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    SelfReportedSuccess,
    MaxIterations,
    MaxConsecutiveErrors,
    MaxRepeatedActions,
    OtherError,
}

impl ExitReason {
    pub const ALL: [ExitReason; 5] = [
        ExitReason::SelfReportedSuccess,
        ExitReason::MaxIterations,
        ExitReason::MaxConsecutiveErrors,
        ExitReason::MaxRepeatedActions,
        ExitReason::OtherError,
    ];

    pub fn is_clean(self) -> bool {
        self == ExitReason::SelfReportedSuccess
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExitReason::SelfReportedSuccess => "self_reported_success",
            ExitReason::MaxIterations => "max_iterations",
            ExitReason::MaxConsecutiveErrors => "max_consecutive_errors",
            ExitReason::MaxRepeatedActions => "max_repeated_actions",
            ExitReason::OtherError => "other_error",
        }
    }
}

impl std::fmt::Display for ExitReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Continue,
    Exit(ExitReason),
}

/// Evaluates the exit conditions in priority order: a parse or other error at
/// this step, the iteration cap, the consecutive-error cap, then the
/// repeated-action cap.
pub fn check_termination(
    history: &[ActionRecord],
    step_count: usize,
    other_error: bool,
    config: &OrchestratorConfig,
) -> Termination {
    if other_error {
        return Termination::Exit(ExitReason::OtherError);
    }
    if step_count >= config.max_iterations {
        return Termination::Exit(ExitReason::MaxIterations);
    }
    if crate::memory::trailing_failures(history.iter().map(|r| r.outcome)) >= config.max_consecutive_errors {
        return Termination::Exit(ExitReason::MaxConsecutiveErrors);
    }
    if trailing_repeats(history) > config.max_repeated_actions {
        return Termination::Exit(ExitReason::MaxRepeatedActions);
    }
    Termination::Continue
}

/// Length of the trailing run of identical actions, or 0 when the last
/// action is exempt (Swipe or Back).
pub fn trailing_repeats(history: &[ActionRecord]) -> usize {
    let Some(last) = history.last() else { return 0 };
    if last.action.exempt_from_repetition() {
        return 0;
    }
    history.iter().rev().take_while(|r| r.action == last.action).count()
}

/// Where a screenshot lives inside the task directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenRecord {
    pub image: String,
    pub width: u32,
    pub height: u32,
    /// Simulator page, and overlay if one is up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_page: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortcutFailureRecord {
    pub index: usize,
    pub error: String,
}

/// One decision iteration. Fields after the failing stage stay empty when a
/// step ends in an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub pre_screen: ScreenRecord,
    pub perception: PerceptionResult,
    /// The Manager received the escalated error records.
    pub escalated: bool,
    pub plan: String,
    pub subgoal: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub thought: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub expectation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateDecision>,
    /// Atomic operations sent to the device during this step.
    pub device_operations: usize,
    /// Intermediate screens of a shortcut, excluding the pre-screen.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shortcut_trace: Vec<ScreenRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shortcut_failure: Option<ShortcutFailureRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_screen: Option<ScreenRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_perception: Option<PerceptionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
    pub progress: String,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub tips: Vec<usize>,
    pub shortcuts: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalRecord>,
    pub steps: Vec<StepRecord>,
    pub exit_reason: ExitReason,
    /// The stop message, or the error that ended the task.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub exit_detail: String,
}

impl Trajectory {
    /// Decision iterations taken.
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn device_operations(&self) -> usize {
        self.steps.iter().map(|s| s.device_operations).sum()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectories serialize") + "\n"
    }
}
