//! Prompt construction and response parsing for the reasoning agents.
//!
//! Every agent is split into a request builder, a response parser and a thin
//! step function that runs both through a [`ModelSession`].

mod call;
mod grammar;
pub mod prompts;

use std::collections::BTreeMap;

use crate::gateway::{complete_audited, AgentRole, AuditLog, GatewayError, ModelBackend, ModelRequest};
use crate::memory::{
    Action, ActionRecord, ArgValue, AtomicOperation, ErrorRecord, LongTermMemory, Outcome, Provenance,
    RetrievalThresholds, ScreenState, TaskQuery, WorkingMemory,
};
use crate::perception::PerceptionResult;
use crate::shortcut::{bind_arguments, tap_type_and_enter, validate_shortcut, Shortcut};

pub use call::{parse_call, CallArg, CallExpr, CallSyntaxError};
pub use grammar::{format_sections, parse_sections, GrammarError, Sections};

use prompts::{
    format_actions, format_elements, format_errors, format_future_tasks, format_shortcut, format_shortcuts,
    format_tips, format_tips_with_ids, operations_reference, or_none, render,
};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{agent} response: {message}")]
    Parse { agent: AgentRole, message: String },
}

impl AgentError {
    fn parse(agent: AgentRole, message: impl ToString) -> Self {
        AgentError::Parse {
            agent,
            message: message.to_string(),
        }
    }
}

/// A backend plus the audit log, task and loop step that requests are filed under.
pub struct ModelSession<'a> {
    pub backend: &'a dyn ModelBackend,
    pub audit: &'a mut AuditLog,
    pub task: Option<String>,
    pub step: usize,
}

impl<'a> ModelSession<'a> {
    pub fn new(backend: &'a dyn ModelBackend, audit: &'a mut AuditLog) -> Self {
        Self {
            backend,
            audit,
            task: None,
            step: 0,
        }
    }

    pub fn for_task(mut self, task: impl Into<String>) -> Self {
        self.task = Some(task.into());
        self
    }

    pub fn complete(&mut self, mut request: ModelRequest) -> Result<String, GatewayError> {
        request.task = self.task.clone();
        complete_audited(self.backend, &request, self.step, self.audit)
    }
}

fn request(caller: AgentRole, user: String, images: Vec<crate::memory::ImageRef>) -> ModelRequest {
    let agent = caller.as_str().replace('_', " ");
    ModelRequest::new(caller, &render(prompts::SYSTEM, &[("agent", &agent)]), user, images)
}

// ---------------------------------------------------------------- Manager

pub struct ManagerInput<'a> {
    pub query: &'a TaskQuery,
    pub screen: &'a ScreenState,
    pub working: &'a WorkingMemory,
    pub memory: &'a LongTermMemory,
    /// The trailing error records when escalation is raised.
    pub escalation: Option<&'a [ErrorRecord]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManagerResponse {
    pub thought: String,
    pub plan: String,
    pub subgoal: String,
}

const MANAGER_LABELS: [&str; 3] = ["THOUGHT", "PLAN", "SUBGOAL"];

impl ManagerResponse {
    pub fn format(&self) -> String {
        format_sections(&[
            ("THOUGHT", &self.thought),
            ("PLAN", &self.plan),
            ("SUBGOAL", &self.subgoal),
        ])
    }

    pub fn parse(text: &str) -> Result<Self, AgentError> {
        let err = |e| AgentError::parse(AgentRole::Manager, e);
        let s = parse_sections(text, &MANAGER_LABELS).map_err(err)?;
        Ok(Self {
            thought: s.or_empty("THOUGHT"),
            plan: s.require("PLAN").map_err(err)?.to_string(),
            subgoal: s.require("SUBGOAL").map_err(err)?.to_string(),
        })
    }
}

pub fn manager_request(input: &ManagerInput<'_>) -> ModelRequest {
    let escalation = match input.escalation {
        Some(errors) => render(
            prompts::MANAGER_ESCALATION,
            &[("k", &errors.len().to_string()), ("errors", &format_errors(errors))],
        ),
        None => String::new(),
    };
    let w = input.working;
    let user = render(
        prompts::MANAGER,
        &[
            ("query", &input.query.query),
            ("plan", or_none(&w.plan)),
            ("subgoal", or_none(&w.subgoal)),
            ("progress", or_none(&w.progress)),
            ("notes", or_none(&w.notes)),
            ("shortcuts", &format_shortcuts(input.memory)),
            ("escalation", &escalation),
        ],
    );
    request(AgentRole::Manager, user, vec![input.screen.image.clone()])
}

pub fn manager_step(session: &mut ModelSession<'_>, input: &ManagerInput<'_>) -> Result<ManagerResponse, AgentError> {
    ManagerResponse::parse(&session.complete(manager_request(input))?)
}

// ---------------------------------------------------------------- Operator

pub struct OperatorInput<'a> {
    pub query: &'a TaskQuery,
    pub screen: &'a ScreenState,
    pub perception: &'a PerceptionResult,
    pub working: &'a WorkingMemory,
    pub history_window: usize,
    pub memory: &'a LongTermMemory,
}

/// The Operator's reply before the action is resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorResponse {
    pub thought: String,
    pub action: String,
    pub expectation: String,
}

const OPERATOR_LABELS: [&str; 3] = ["THOUGHT", "ACTION", "EXPECTATION"];

impl OperatorResponse {
    pub fn format(&self) -> String {
        format_sections(&[
            ("THOUGHT", &self.thought),
            ("ACTION", &self.action),
            ("EXPECTATION", &self.expectation),
        ])
    }

    pub fn parse(text: &str) -> Result<Self, AgentError> {
        let err = |e| AgentError::parse(AgentRole::Operator, e);
        let s = parse_sections(text, &OPERATOR_LABELS).map_err(err)?;
        let action = s.require("ACTION").map_err(err)?;
        if action.contains('\n') {
            return Err(err(GrammarError::Invalid {
                section: "ACTION",
                message: "must be a single line".into(),
            }));
        }
        Ok(Self {
            thought: s.or_empty("THOUGHT"),
            action: action.trim_matches('`').trim().to_string(),
            expectation: s.or_empty("EXPECTATION"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorDecision {
    pub thought: String,
    pub action: Action,
    pub expectation: String,
}

/// Resolves a call expression against the atomic operations, `Stop` and the
/// shortcuts in `memory`.
pub fn resolve_action(text: &str, memory: &LongTermMemory) -> Result<Action, String> {
    let call = parse_call(text).map_err(|e| e.to_string())?;
    let params: Vec<String> = if call.name == "Stop" {
        vec!["message".into()]
    } else if let Some(params) = AtomicOperation::parameters(&call.name) {
        params.iter().map(|(p, _)| p.to_string()).collect()
    } else if let Some(shortcut) = memory.shortcut(&call.name) {
        shortcut.arguments.clone()
    } else {
        return Err(format!("unknown action {:?}", call.name));
    };
    let mut named = BTreeMap::new();
    let mut positional_done = false;
    for (i, arg) in call.args.into_iter().enumerate() {
        let key = match arg.name {
            Some(n) => {
                positional_done = true;
                n
            }
            None if positional_done => return Err("positional argument after keyword argument".into()),
            None => params
                .get(i)
                .cloned()
                .ok_or_else(|| format!("{} takes {} argument(s)", call.name, params.len()))?,
        };
        if named.insert(key.clone(), arg.value).is_some() {
            return Err(format!("argument {key:?} given twice"));
        }
    }
    if call.name == "Stop" {
        let message = match named.remove("message") {
            Some(ArgValue::Text(m)) => m,
            Some(ArgValue::Int(n)) => n.to_string(),
            None => String::new(),
        };
        if let Some(extra) = named.keys().next() {
            return Err(format!("Stop has no argument {extra:?}"));
        }
        return Ok(Action::Stop { message });
    }
    if AtomicOperation::is_atomic_name(&call.name) {
        return AtomicOperation::from_named(&call.name, &named)
            .map(Action::atomic)
            .map_err(|e| e.to_string());
    }
    let shortcut = memory.shortcut(&call.name).expect("checked above");
    bind_arguments(shortcut, &named)
        .map(|call| Action::Shortcut { call })
        .map_err(|e| e.to_string())
}

pub fn operator_request(input: &OperatorInput<'_>) -> ModelRequest {
    let w = input.working;
    let (actions, errors) = crate::memory::history_window(w, input.history_window);
    let user = render(
        prompts::OPERATOR,
        &[
            ("query", &input.query.query),
            ("plan", or_none(&w.plan)),
            ("subgoal", or_none(&w.subgoal)),
            ("progress", or_none(&w.progress)),
            ("notes", or_none(&w.notes)),
            ("width", &input.screen.width.to_string()),
            ("height", &input.screen.height.to_string()),
            ("elements", &format_elements(input.perception)),
            ("actions", &format_actions(actions)),
            ("errors", &format_errors(errors)),
            ("tips", &format_tips(input.memory)),
            ("operations", &operations_reference()),
            ("shortcuts", &format_shortcuts(input.memory)),
        ],
    );
    request(AgentRole::Operator, user, vec![input.screen.image.clone()])
}

pub fn operator_step(
    session: &mut ModelSession<'_>,
    input: &OperatorInput<'_>,
) -> Result<OperatorDecision, AgentError> {
    let response = OperatorResponse::parse(&session.complete(operator_request(input))?)?;
    let action =
        resolve_action(&response.action, input.memory).map_err(|e| AgentError::parse(AgentRole::Operator, e))?;
    Ok(OperatorDecision {
        thought: response.thought,
        action,
        expectation: response.expectation,
    })
}

// ---------------------------------------------------------------- Action Reflector

pub struct ReflectorInput<'a> {
    pub query: &'a TaskQuery,
    pub before: &'a ScreenState,
    pub before_perception: &'a PerceptionResult,
    pub after: &'a ScreenState,
    pub after_perception: &'a PerceptionResult,
    pub action: &'a Action,
    pub expectation: &'a str,
    pub subgoal: &'a str,
    pub progress: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReflectorResponse {
    pub outcome: Outcome,
    pub error_description: String,
    pub suspected_cause: String,
    pub suggested_fix: String,
    /// `None` keeps the prior progress.
    pub progress: Option<String>,
}

const REFLECTOR_LABELS: [&str; 5] = [
    "OUTCOME",
    "ERROR_DESCRIPTION",
    "SUSPECTED_CAUSE",
    "SUGGESTED_FIX",
    "PROGRESS",
];

fn none_to_empty(text: String) -> String {
    if text.eq_ignore_ascii_case("none") {
        String::new()
    } else {
        text
    }
}

impl ReflectorResponse {
    pub fn format(&self) -> String {
        let mut sections = vec![
            ("OUTCOME", self.outcome.label()),
            ("ERROR_DESCRIPTION", or_none(&self.error_description)),
            ("SUSPECTED_CAUSE", or_none(&self.suspected_cause)),
            ("SUGGESTED_FIX", or_none(&self.suggested_fix)),
        ];
        if let Some(p) = &self.progress {
            sections.push(("PROGRESS", p));
        }
        format_sections(&sections)
    }

    pub fn parse(text: &str) -> Result<Self, AgentError> {
        let err = |e| AgentError::parse(AgentRole::ActionReflector, e);
        let s = parse_sections(text, &REFLECTOR_LABELS).map_err(err)?;
        let raw = s.require("OUTCOME").map_err(err)?;
        let token = raw
            .split(|c: char| !c.is_ascii_alphanumeric())
            .find(|t| !t.is_empty())
            .unwrap_or_default();
        let outcome = match token {
            "A" => Outcome::A,
            "B" => Outcome::B,
            "C" => Outcome::C,
            _ => {
                return Err(err(GrammarError::Invalid {
                    section: "OUTCOME",
                    message: format!("expected A, B or C, got {raw:?}"),
                }))
            }
        };
        let response = Self {
            outcome,
            error_description: none_to_empty(s.or_empty("ERROR_DESCRIPTION")),
            suspected_cause: none_to_empty(s.or_empty("SUSPECTED_CAUSE")),
            suggested_fix: none_to_empty(s.or_empty("SUGGESTED_FIX")),
            progress: s.get("PROGRESS").map(str::to_string),
        };
        if outcome.is_failure() && response.error_description.is_empty() {
            return Err(err(GrammarError::Missing("ERROR_DESCRIPTION")));
        }
        Ok(response)
    }
}

/// Result of one reflection: the action record, its error record on failure
/// and the updated progress.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reflection {
    pub record: ActionRecord,
    pub error: Option<ErrorRecord>,
    pub progress: String,
}

impl ReflectorResponse {
    pub fn into_reflection(
        self,
        step_index: usize,
        action: &Action,
        expectation: &str,
        prior_progress: &str,
    ) -> Reflection {
        let error = self.outcome.is_failure().then(|| ErrorRecord {
            step_index,
            description: self.error_description.clone(),
            suspected_cause: self.suspected_cause.clone(),
            suggested_fix: self.suggested_fix.clone(),
        });
        Reflection {
            record: ActionRecord {
                step_index,
                action: action.clone(),
                outcome: self.outcome,
                expectation: expectation.to_string(),
            },
            error,
            progress: self.progress.unwrap_or_else(|| prior_progress.to_string()),
        }
    }
}

pub fn reflector_request(input: &ReflectorInput<'_>) -> ModelRequest {
    let user = render(
        prompts::ACTION_REFLECTOR,
        &[
            ("query", &input.query.query),
            ("subgoal", or_none(input.subgoal)),
            ("progress", or_none(input.progress)),
            ("action", &input.action.to_string()),
            ("expectation", or_none(input.expectation)),
            ("elements_before", &format_elements(input.before_perception)),
            ("elements_after", &format_elements(input.after_perception)),
        ],
    );
    request(
        AgentRole::ActionReflector,
        user,
        vec![input.before.image.clone(), input.after.image.clone()],
    )
}

pub fn reflect_action(
    session: &mut ModelSession<'_>,
    input: &ReflectorInput<'_>,
    step_index: usize,
) -> Result<Reflection, AgentError> {
    let response = ReflectorResponse::parse(&session.complete(reflector_request(input))?)?;
    Ok(response.into_reflection(step_index, input.action, input.expectation, input.progress))
}

// ---------------------------------------------------------------- Notetaker

pub struct NotetakerInput<'a> {
    pub query: &'a TaskQuery,
    pub screen: &'a ScreenState,
    pub perception: &'a PerceptionResult,
    pub plan: &'a str,
    pub subgoal: &'a str,
    pub progress: &'a str,
    pub notes: &'a str,
}

pub fn format_notes(notes: &str) -> String {
    format_sections(&[("NOTES", notes)])
}

pub fn parse_notes(text: &str) -> Result<String, AgentError> {
    let err = |e| AgentError::parse(AgentRole::Notetaker, e);
    let s = parse_sections(text, &["NOTES"]).map_err(err)?;
    Ok(s.require("NOTES").map_err(err)?.to_string())
}

pub fn notetaker_request(input: &NotetakerInput<'_>) -> ModelRequest {
    let user = render(
        prompts::NOTETAKER,
        &[
            ("query", &input.query.query),
            ("plan", or_none(input.plan)),
            ("subgoal", or_none(input.subgoal)),
            ("progress", or_none(input.progress)),
            ("notes", or_none(input.notes)),
            ("elements", &format_elements(input.perception)),
        ],
    );
    request(AgentRole::Notetaker, user, vec![input.screen.image.clone()])
}

pub fn take_notes(session: &mut ModelSession<'_>, input: &NotetakerInput<'_>) -> Result<String, AgentError> {
    parse_notes(&session.complete(notetaker_request(input))?)
}

// ---------------------------------------------------------------- Experience Reflectors

/// Everything the experience reflectors see at the end of a task.
pub struct EvolutionInput<'a> {
    pub query: &'a TaskQuery,
    pub plan: &'a str,
    pub progress: &'a str,
    pub actions: &'a [ActionRecord],
    pub errors: &'a [ErrorRecord],
    /// Queries of the tasks still to come in the scenario.
    pub future: &'a [TaskQuery],
}

pub fn format_tips_response(tips: &[String]) -> String {
    let list = tips
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {t}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    format_sections(&[("TIPS", &list)])
}

/// The numbered list in a TIPS section, in order.
pub fn parse_tips_response(text: &str) -> Result<Vec<String>, AgentError> {
    let err = |e| AgentError::parse(AgentRole::TipReflector, e);
    let s = parse_sections(text, &["TIPS"]).map_err(err)?;
    let mut tips: Vec<String> = Vec::new();
    for line in s.require("TIPS").map_err(err)?.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let numbered = line
            .split_once('.')
            .filter(|(n, _)| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()));
        match numbered {
            Some((_, text)) if !text.trim().is_empty() => tips.push(text.trim().to_string()),
            _ => match tips.last_mut() {
                Some(last) => {
                    last.push(' ');
                    last.push_str(line);
                }
                None => {
                    return Err(err(GrammarError::Invalid {
                        section: "TIPS",
                        message: format!("expected a numbered tip, got {line:?}"),
                    }))
                }
            },
        }
    }
    Ok(tips)
}

pub fn tip_reflector_request(input: &EvolutionInput<'_>, memory: &LongTermMemory) -> ModelRequest {
    let user = render(
        prompts::TIP_REFLECTOR,
        &[
            ("query", &input.query.query),
            ("plan", or_none(input.plan)),
            ("progress", or_none(input.progress)),
            ("actions", &format_actions(input.actions)),
            ("errors", &format_errors(input.errors)),
            ("future", &format_future_tasks(input.future)),
            ("tips", &format_tips_with_ids(memory)),
        ],
    );
    request(AgentRole::TipReflector, user, Vec::new())
}

/// Replaces the tip list with the reflector's. An empty list leaves memory
/// unchanged. Returns the number of tips that are new.
pub fn evolve_tips(
    session: &mut ModelSession<'_>,
    input: &EvolutionInput<'_>,
    memory: &mut LongTermMemory,
) -> Result<usize, AgentError> {
    let tips = parse_tips_response(&session.complete(tip_reflector_request(input, memory))?)?;
    if tips.is_empty() {
        log::warn!(
            "tip reflector returned no tips for task {}; keeping {} tips",
            input.query.id,
            memory.tips().len()
        );
        return Ok(0);
    }
    let fresh = tips
        .iter()
        .filter(|t| !memory.tips().iter().any(|e| &e.tip.text == *t))
        .count();
    memory.replace_tips(tips, Provenance::Evolved(input.query.id.clone()));
    Ok(fresh)
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rejection {
    /// Proposed name, when the record had one.
    pub name: Option<String>,
    /// Error class, such as `unused_argument` or `duplicate_name`.
    pub class: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EvolutionReport {
    pub admitted: Vec<String>,
    pub rejected: Vec<Rejection>,
}

pub fn format_shortcuts_response(shortcuts: &[Shortcut]) -> String {
    let json = serde_json::to_string(shortcuts).expect("shortcuts serialize");
    format_sections(&[("SHORTCUTS", &json)])
}

/// The SHORTCUTS section as raw JSON records, so each can be judged alone.
pub fn parse_shortcuts_response(text: &str) -> Result<Vec<serde_json::Value>, AgentError> {
    let err = |e| AgentError::parse(AgentRole::ShortcutReflector, e);
    let s = parse_sections(text, &["SHORTCUTS"]).map_err(err)?;
    let body = s.require("SHORTCUTS").map_err(err)?;
    let body = body
        .trim()
        .trim_start_matches("```json")
        .trim_start_matches("```")
        .trim_end_matches("```")
        .trim();
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| {
        err(GrammarError::Invalid {
            section: "SHORTCUTS",
            message: e.to_string(),
        })
    })?;
    match value {
        serde_json::Value::Array(items) => Ok(items),
        _ => Err(err(GrammarError::Invalid {
            section: "SHORTCUTS",
            message: "expected a JSON array".into(),
        })),
    }
}

pub fn shortcut_reflector_request(input: &EvolutionInput<'_>, memory: &LongTermMemory) -> ModelRequest {
    let user = render(
        prompts::SHORTCUT_REFLECTOR,
        &[
            ("query", &input.query.query),
            ("plan", or_none(input.plan)),
            ("progress", or_none(input.progress)),
            ("actions", &format_actions(input.actions)),
            ("errors", &format_errors(input.errors)),
            ("future", &format_future_tasks(input.future)),
            ("shortcuts", &format_shortcuts(memory)),
            ("operations", &operations_reference()),
            ("example", &format_shortcut(&tap_type_and_enter())),
        ],
    );
    request(AgentRole::ShortcutReflector, user, Vec::new())
}

/// Admits each proposal that decodes, validates and has a fresh name.
pub fn admit_proposals(
    proposals: Vec<serde_json::Value>,
    memory: &mut LongTermMemory,
    provenance: &Provenance,
) -> EvolutionReport {
    let mut report = EvolutionReport::default();
    for raw in proposals {
        let name = raw.get("name").and_then(|n| n.as_str()).map(str::to_string);
        let reject = |class: &str, message: String| Rejection {
            name: name.clone(),
            class: class.to_string(),
            message,
        };
        let candidate: Shortcut = match serde_json::from_value(raw) {
            Ok(s) => s,
            Err(e) => {
                report.rejected.push(reject("malformed_record", e.to_string()));
                continue;
            }
        };
        let validated = match validate_shortcut(candidate) {
            Ok(v) => v,
            Err(e) => {
                report.rejected.push(reject(e.class(), e.to_string()));
                continue;
            }
        };
        let admitted_name = validated.name.clone();
        match memory.admit_shortcut(validated, provenance.clone()) {
            Ok(()) => report.admitted.push(admitted_name),
            Err(e) => report.rejected.push(reject("duplicate_name", e.to_string())),
        }
    }
    for r in &report.rejected {
        log::info!(
            "rejected shortcut {}: {} ({})",
            r.name.as_deref().unwrap_or("<unnamed>"),
            r.message,
            r.class
        );
    }
    if report.admitted.is_empty() && !report.rejected.is_empty() {
        log::warn!(
            "all {} proposed shortcuts were rejected; memory unchanged",
            report.rejected.len()
        );
    }
    report
}

pub fn evolve_shortcuts(
    session: &mut ModelSession<'_>,
    input: &EvolutionInput<'_>,
    memory: &mut LongTermMemory,
) -> Result<EvolutionReport, AgentError> {
    let proposals = parse_shortcuts_response(&session.complete(shortcut_reflector_request(input, memory))?)?;
    Ok(admit_proposals(
        proposals,
        memory,
        &Provenance::Evolved(input.query.id.clone()),
    ))
}

// ---------------------------------------------------------------- Experience Retrievers

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Retrieval {
    /// The memory the Operator will see.
    pub visible: LongTermMemory,
    pub tips_retrieved: bool,
    pub shortcuts_retrieved: bool,
    /// Ids or names in the responses that do not exist in memory.
    pub dropped: Vec<String>,
}

fn split_list(value: &str) -> Vec<String> {
    if value.trim().eq_ignore_ascii_case("none") {
        return Vec::new();
    }
    value
        .split([',', '\n'])
        .map(|s| s.trim().trim_start_matches("- ").trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn format_tip_selection(ids: &[usize]) -> String {
    let list = ids.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
    format_sections(&[("SELECTED_TIPS", if list.is_empty() { "None" } else { &list })])
}

pub fn parse_tip_selection(text: &str) -> Result<Vec<String>, AgentError> {
    let err = |e| AgentError::parse(AgentRole::TipRetriever, e);
    let s = parse_sections(text, &["SELECTED_TIPS"]).map_err(err)?;
    Ok(split_list(s.require("SELECTED_TIPS").map_err(err)?))
}

pub fn format_shortcut_selection(names: &[String]) -> String {
    let list = names.join(", ");
    format_sections(&[("SELECTED_SHORTCUTS", if list.is_empty() { "None" } else { &list })])
}

pub fn parse_shortcut_selection(text: &str) -> Result<Vec<String>, AgentError> {
    let err = |e| AgentError::parse(AgentRole::ShortcutRetriever, e);
    let s = parse_sections(text, &["SELECTED_SHORTCUTS"]).map_err(err)?;
    Ok(split_list(s.require("SELECTED_SHORTCUTS").map_err(err)?))
}

/// Narrows the memory to entries relevant to `query`. Each kind is only
/// retrieved when memory holds more entries than its threshold; otherwise it
/// passes through whole.
pub fn retrieve_memory(
    session: &mut ModelSession<'_>,
    query: &TaskQuery,
    memory: &LongTermMemory,
    thresholds: RetrievalThresholds,
) -> Result<Retrieval, AgentError> {
    let mut dropped = Vec::new();
    let all_ids: Vec<usize> = memory.tips().iter().map(|t| t.tip.id).collect();
    let all_names: Vec<String> = memory.shortcuts().iter().map(|s| s.shortcut.name.clone()).collect();

    let tips_retrieved = memory.tips().len() > thresholds.max_tips;
    let tip_ids = if tips_retrieved {
        let user = render(
            prompts::TIP_RETRIEVER,
            &[("query", &query.query), ("tips", &format_tips_with_ids(memory))],
        );
        let selected = parse_tip_selection(&session.complete(request(AgentRole::TipRetriever, user, Vec::new()))?)?;
        let mut ids = Vec::new();
        for s in selected {
            match s.trim_end_matches('.').parse::<usize>() {
                Ok(id) if all_ids.contains(&id) => ids.push(id),
                _ => {
                    log::warn!("tip retriever selected unknown tip {s:?}; dropped");
                    dropped.push(s);
                }
            }
        }
        ids
    } else {
        all_ids
    };

    let shortcuts_retrieved = memory.shortcuts().len() > thresholds.max_shortcuts;
    let names = if shortcuts_retrieved {
        let user = render(
            prompts::SHORTCUT_RETRIEVER,
            &[("query", &query.query), ("shortcuts", &format_shortcuts(memory))],
        );
        let selected =
            parse_shortcut_selection(&session.complete(request(AgentRole::ShortcutRetriever, user, Vec::new()))?)?;
        let mut names = Vec::new();
        for s in selected {
            if all_names.contains(&s) {
                names.push(s);
            } else {
                log::warn!("shortcut retriever selected unknown shortcut {s:?}; dropped");
                dropped.push(s);
            }
        }
        names
    } else {
        all_names
    };

    Ok(Retrieval {
        visible: memory.subset(&tip_ids, &names),
        tips_retrieved,
        shortcuts_retrieved,
        dropped,
    })
}

/// The starter tips that ship with the crate.
pub fn seed_tips() -> Vec<String> {
    include_str!("../../data/seed_tips.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// A memory holding only the seed tips.
pub fn seed_memory() -> LongTermMemory {
    let mut memory = LongTermMemory::new();
    for tip in seed_tips() {
        memory.add_tip(tip, Provenance::Seed);
    }
    memory
}
