//! Working memory, long-term memory and the shared value types every agent
//! reads and writes.

mod action;
mod long_term;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::device::SimTruth;
use crate::shortcut::GateMode;

pub use action::{Action, ArgValue, AtomicOperation, OperationError, ParamKind, ShortcutCall, ATOMIC_OPERATION_NAMES};
pub(crate) use long_term::hex_digest;
pub use long_term::{load_memory, save_memory, LongTermMemory, MemoryError, Provenance, ShortcutEntry, Tip, TipEntry};

/// A natural-language instruction from the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskQuery {
    pub id: String,
    #[serde(default)]
    pub scenario: String,
    /// Apps the task is expected to touch (informational).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub apps: Vec<String>,
    pub query: String,
}

impl TaskQuery {
    pub fn new(id: impl Into<String>, query: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            scenario: String::new(),
            apps: Vec::new(),
            query: query.into(),
        }
    }
}

/// Screenshot payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageRef {
    Path(PathBuf),
    Png(Vec<u8>),
}

impl ImageRef {
    pub fn read_bytes(&self) -> std::io::Result<Vec<u8>> {
        match self {
            ImageRef::Path(p) => std::fs::read(p),
            ImageRef::Png(b) => Ok(b.clone()),
        }
    }
}

/// The phone state `s_t`: a screenshot plus, on the simulator, the structured
/// ground truth it was rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenState {
    pub step_index: usize,
    pub image: ImageRef,
    pub width: u32,
    pub height: u32,
    pub sim_truth: Option<SimTruth>,
}

/// Reflector verdict for one action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// Successful or partially successful.
    A,
    /// Failed: wrong page.
    B,
    /// Failed: no change.
    C,
}

impl Outcome {
    pub fn is_failure(self) -> bool {
        !matches!(self, Outcome::A)
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::A => "A",
            Outcome::B => "B",
            Outcome::C => "C",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub step_index: usize,
    pub action: Action,
    pub outcome: Outcome,
    /// What the Operator expected the action to achieve.
    pub expectation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub step_index: usize,
    pub description: String,
    #[serde(default)]
    pub suspected_cause: String,
    #[serde(default)]
    pub suggested_fix: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HistoryError {
    #[error("outcome {outcome:?} at step {step} requires an error record")]
    MissingError { step: usize, outcome: Outcome },
    #[error("outcome A at step {0} cannot carry an error record")]
    UnexpectedError(usize),
    #[error("error record step {error} does not match action step {action}")]
    StepMismatch { action: usize, error: usize },
    #[error("error record at step {0} has an empty description")]
    EmptyDescription(usize),
}

/// Per-task mutable state. Histories are append-only; the escalation flag is
/// derived from the action history so it can never disagree with it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingMemory {
    pub plan: String,
    pub subgoal: String,
    pub progress: String,
    pub notes: String,
    action_history: Vec<ActionRecord>,
    error_history: Vec<ErrorRecord>,
}

impl WorkingMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn action_history(&self) -> &[ActionRecord] {
        &self.action_history
    }

    pub fn error_history(&self) -> &[ErrorRecord] {
        &self.error_history
    }

    /// Appends one reflected action. Failures must come with an error record
    /// for the same step, successes must not.
    pub fn record(&mut self, action: ActionRecord, error: Option<ErrorRecord>) -> Result<(), HistoryError> {
        match (&error, action.outcome) {
            (None, o) if o.is_failure() => {
                return Err(HistoryError::MissingError {
                    step: action.step_index,
                    outcome: o,
                })
            }
            (Some(_), Outcome::A) => return Err(HistoryError::UnexpectedError(action.step_index)),
            (Some(e), _) if e.step_index != action.step_index => {
                return Err(HistoryError::StepMismatch {
                    action: action.step_index,
                    error: e.step_index,
                })
            }
            (Some(e), _) if e.description.trim().is_empty() => {
                return Err(HistoryError::EmptyDescription(e.step_index))
            }
            _ => {}
        }
        self.action_history.push(action);
        if let Some(e) = error {
            self.error_history.push(e);
        }
        Ok(())
    }

    /// Length of the trailing run of failed (B or C) outcomes.
    pub fn trailing_failures(&self) -> usize {
        trailing_failures(self.action_history.iter().map(|r| r.outcome))
    }

    /// Raised when the last `k` outcomes all failed.
    pub fn escalation_flag(&self, k: usize) -> bool {
        self.trailing_failures() >= k
    }

    /// The last `k` error records, sent to the Manager on escalation.
    pub fn escalation_errors(&self, k: usize) -> &[ErrorRecord] {
        tail(&self.error_history, k)
    }
}

pub(crate) fn trailing_failures(outcomes: impl DoubleEndedIterator<Item = Outcome>) -> usize {
    outcomes.rev().take_while(|o| o.is_failure()).count()
}

fn tail<T>(items: &[T], n: usize) -> &[T] {
    &items[items.len().saturating_sub(n)..]
}

/// The latest `m` actions and errors, in order.
pub fn history_window(memory: &WorkingMemory, m: usize) -> (&[ActionRecord], &[ErrorRecord]) {
    (tail(&memory.action_history, m), tail(&memory.error_history, m))
}

/// Selection thresholds for the experience retrievers. Retrieval runs for a
/// kind of entry only when the memory holds more entries than the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalThresholds {
    pub max_tips: usize,
    pub max_shortcuts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorConfig {
    /// Consecutive failures that escalate errors to the Manager.
    pub k_escalation: usize,
    /// Action/error history window shown to the Operator.
    pub m_history_window: usize,
    pub max_iterations: usize,
    pub max_consecutive_errors: usize,
    pub max_repeated_actions: usize,
    pub precondition_gate: GateMode,
    /// `None` disables the experience retrievers.
    pub retrieval: Option<RetrievalThresholds>,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            k_escalation: 2,
            m_history_window: 5,
            max_iterations: 40,
            max_consecutive_errors: 3,
            max_repeated_actions: 3,
            precondition_gate: GateMode::ModelMediated,
            retrieval: None,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("`{0}` must be at least 1")]
    NotPositive(&'static str),
    #[error("k_escalation ({k}) must not exceed max_consecutive_errors ({max})")]
    EscalationAboveLimit { k: usize, max: usize },
}

impl OrchestratorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("k_escalation", self.k_escalation),
            ("m_history_window", self.m_history_window),
            ("max_iterations", self.max_iterations),
            ("max_consecutive_errors", self.max_consecutive_errors),
            ("max_repeated_actions", self.max_repeated_actions),
        ] {
            if value == 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if self.k_escalation > self.max_consecutive_errors {
            return Err(ConfigError::EscalationAboveLimit {
                k: self.k_escalation,
                max: self.max_consecutive_errors,
            });
        }
        Ok(())
    }
}
