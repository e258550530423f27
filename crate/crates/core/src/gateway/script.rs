//! Canned responses keyed by caller and per-caller call counter.
//!
//! A script book is a JSON file:
//!
//! ```json
//! {
//!   "entries": [
//!     {"caller": "manager", "step": 1, "response": "PLAN: ...\nSUBGOAL: ..."},
//!     {"caller": "operator", "steps": [2, 4], "response": ["THOUGHT: ...", "ACTION: Back"]},
//!     {"caller": "notetaker", "response": "NOTES: "},
//!     {"caller": "operator", "from_step": 5, "contains": "Price", "response": "..."}
//!   ]
//! }
//! ```
//!
//! Steps count calls per task and caller starting at 1. An optional `task`
//! key restricts an entry to one task id. All keys present on an entry must
//! hold; an entry with no key matches every call. A response given as an
//! array is joined with newlines. Exactly one entry must match each call.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{AgentRole, GatewayError, ModelBackend, ModelRequest};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchKey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    /// Inclusive range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_step: Option<usize>,
    /// Substring of the request text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
}

impl MatchKey {
    pub fn step(n: usize) -> Self {
        Self {
            step: Some(n),
            ..Self::default()
        }
    }

    pub fn steps(from: usize, to: usize) -> Self {
        Self {
            steps: Some((from, to)),
            ..Self::default()
        }
    }

    pub fn from_step(n: usize) -> Self {
        Self {
            from_step: Some(n),
            ..Self::default()
        }
    }

    pub fn contains(text: impl Into<String>) -> Self {
        Self {
            contains: Some(text.into()),
            ..Self::default()
        }
    }

    pub fn always() -> Self {
        Self::default()
    }

    pub fn for_task(mut self, task: impl Into<String>) -> Self {
        self.task = Some(task.into());
        self
    }

    fn matches(&self, task: Option<&str>, step: usize, text: &str) -> bool {
        self.task.as_deref().is_none_or(|t| Some(t) == task)
            && self.step.is_none_or(|s| s == step)
            && self.steps.is_none_or(|(a, b)| (a..=b).contains(&step))
            && self.from_step.is_none_or(|s| step >= s)
            && self.contains.as_deref().is_none_or(|c| text.contains(c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptResponse {
    Text(String),
    Lines(Vec<String>),
}

impl ScriptResponse {
    pub fn render(&self) -> String {
        match self {
            ScriptResponse::Text(t) => t.clone(),
            ScriptResponse::Lines(lines) => lines.join("\n"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub caller: AgentRole,
    #[serde(flatten)]
    pub key: MatchKey,
    pub response: ScriptResponse,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptBook {
    pub entries: Vec<ScriptEntry>,
}

impl ScriptBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, caller: AgentRole, key: MatchKey, response: impl Into<String>) -> &mut Self {
        self.entries.push(ScriptEntry {
            caller,
            key,
            response: ScriptResponse::Text(response.into()),
        });
        self
    }

    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("cannot read script book {}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| GatewayError::Config(format!("script book {}: {e}", path.display())))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("script books serialize") + "\n"
    }

    /// The unique response for `caller`'s `step`-th call with request text `text`.
    pub fn lookup(&self, caller: AgentRole, step: usize, text: &str) -> Result<String, GatewayError> {
        self.lookup_in(None, caller, step, text)
    }

    pub fn lookup_in(
        &self,
        task: Option<&str>,
        caller: AgentRole,
        step: usize,
        text: &str,
    ) -> Result<String, GatewayError> {
        let mut hits = self
            .entries
            .iter()
            .filter(|e| e.caller == caller && e.key.matches(task, step, text));
        match (hits.next(), hits.count()) {
            (None, _) => Err(GatewayError::ScriptMiss { caller, step }),
            (Some(e), 0) => Ok(e.response.render()),
            (Some(_), more) => Err(GatewayError::ScriptAmbiguous {
                caller,
                step,
                count: more + 1,
            }),
        }
    }
}

/// Replays a [`ScriptBook`], advancing one counter per task and caller.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    book: ScriptBook,
    counters: Mutex<HashMap<(Option<String>, AgentRole), usize>>,
}

impl ScriptedBackend {
    pub fn new(book: ScriptBook) -> Self {
        Self {
            book,
            counters: Mutex::new(HashMap::new()),
        }
    }

    pub fn book(&self) -> &ScriptBook {
        &self.book
    }

    /// Calls served so far for `caller`, across all tasks.
    pub fn calls(&self, caller: AgentRole) -> usize {
        self.counters
            .lock()
            .unwrap()
            .iter()
            .filter(|((_, c), _)| *c == caller)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn reset(&self) {
        self.counters.lock().unwrap().clear();
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, request: &ModelRequest) -> Result<String, GatewayError> {
        let step = {
            let mut counters = self.counters.lock().unwrap();
            let n = counters.entry((request.task.clone(), request.caller)).or_insert(0);
            *n += 1;
            *n
        };
        self.book
            .lookup_in(request.task.as_deref(), request.caller, step, &request.text())
    }
}
