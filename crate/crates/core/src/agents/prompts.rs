//! Versioned prompt templates and the line formats they embed.
//!
//! Records that prompt-content checks count are rendered one per line with a
//! fixed marker: `[action step N]`, `[error step N]`, `[element]` and
//! `[future task]`.

use crate::memory::{ActionRecord, ErrorRecord, LongTermMemory, TaskQuery, ATOMIC_OPERATION_NAMES};
use crate::perception::{PerceivedKind, PerceptionResult};
use crate::shortcut::Shortcut;

pub const PROMPT_VERSION: &str = "v1";

pub(crate) const SYSTEM: &str = include_str!("../../data/prompts/system.v1.txt");
pub(crate) const MANAGER: &str = include_str!("../../data/prompts/manager.v1.txt");
pub(crate) const MANAGER_ESCALATION: &str = include_str!("../../data/prompts/manager_escalation.v1.txt");
pub(crate) const OPERATOR: &str = include_str!("../../data/prompts/operator.v1.txt");
pub(crate) const ACTION_REFLECTOR: &str = include_str!("../../data/prompts/action_reflector.v1.txt");
pub(crate) const NOTETAKER: &str = include_str!("../../data/prompts/notetaker.v1.txt");
pub(crate) const TIP_REFLECTOR: &str = include_str!("../../data/prompts/tip_reflector.v1.txt");
pub(crate) const SHORTCUT_REFLECTOR: &str = include_str!("../../data/prompts/shortcut_reflector.v1.txt");
pub(crate) const FUTURE_TASKS: &str = include_str!("../../data/prompts/future_tasks.v1.txt");
pub(crate) const TIP_RETRIEVER: &str = include_str!("../../data/prompts/tip_retriever.v1.txt");
pub(crate) const SHORTCUT_RETRIEVER: &str = include_str!("../../data/prompts/shortcut_retriever.v1.txt");

pub const ACTION_MARKER: &str = "[action step ";
pub const ERROR_MARKER: &str = "[error step ";
pub const ELEMENT_MARKER: &str = "[element]";
pub const FUTURE_MARKER: &str = "[future task]";

const NONE: &str = "None";

/// Substitutes `{{key}}` placeholders in one pass, so values that contain
/// braces are never re-expanded.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match values.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => panic!("template placeholder {{{{{key}}}}} has no value"),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

pub(crate) fn or_none(text: &str) -> &str {
    if text.trim().is_empty() {
        NONE
    } else {
        text
    }
}

pub fn format_action_record(r: &ActionRecord) -> String {
    format!(
        "{ACTION_MARKER}{}] {} | outcome {} | expected: {}",
        r.step_index,
        r.action,
        r.outcome.label(),
        one_line(&r.expectation)
    )
}

pub fn format_error_record(e: &ErrorRecord) -> String {
    format!(
        "{ERROR_MARKER}{}] {} | cause: {} | fix: {}",
        e.step_index,
        one_line(&e.description),
        one_line(or_none(&e.suspected_cause)),
        one_line(or_none(&e.suggested_fix))
    )
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn format_actions(records: &[ActionRecord]) -> String {
    if records.is_empty() {
        return NONE.into();
    }
    records.iter().map(format_action_record).collect::<Vec<_>>().join("\n")
}

pub fn format_errors(records: &[ErrorRecord]) -> String {
    if records.is_empty() {
        return NONE.into();
    }
    records.iter().map(format_error_record).collect::<Vec<_>>().join("\n")
}

pub fn format_elements(perception: &PerceptionResult) -> String {
    if perception.is_empty() {
        return "(no elements detected)".into();
    }
    perception
        .elements
        .iter()
        .map(|e| {
            let kind = match e.kind {
                PerceivedKind::Text => "text",
                PerceivedKind::Icon => "icon",
            };
            let field = if e.input_field { " (input field)" } else { "" };
            format!(
                "{ELEMENT_MARKER} {kind} {:?} at ({}, {}){field}",
                e.content, e.center.0, e.center.1
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Tips numbered by position.
pub fn format_tips(memory: &LongTermMemory) -> String {
    if memory.tips().is_empty() {
        return NONE.into();
    }
    memory
        .tips()
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t.tip.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Tips with their stored ids, for the retriever.
pub fn format_tips_with_ids(memory: &LongTermMemory) -> String {
    if memory.tips().is_empty() {
        return NONE.into();
    }
    memory
        .tips()
        .iter()
        .map(|t| format!("{}. {}", t.tip.id, t.tip.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One compact JSON record per line.
pub fn format_shortcut(shortcut: &Shortcut) -> String {
    serde_json::to_string(shortcut).expect("shortcuts serialize")
}

pub fn format_shortcuts(memory: &LongTermMemory) -> String {
    if memory.shortcuts().is_empty() {
        return NONE.into();
    }
    memory
        .shortcuts()
        .iter()
        .map(|e| format_shortcut(&e.shortcut))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn format_future_tasks(future: &[TaskQuery]) -> String {
    if future.is_empty() {
        return String::new();
    }
    let tasks = future
        .iter()
        .map(|t| format!("{FUTURE_MARKER} {}", one_line(&t.query)))
        .collect::<Vec<_>>()
        .join("\n");
    render(FUTURE_TASKS, &[("tasks", &tasks)])
}

pub fn operations_reference() -> String {
    let doc = |name: &str| match name {
        "Open_App" => "Open_App(app_name): open an app; only works from the home screen",
        "Tap" => "Tap(x, y): tap the position (x, y)",
        "Swipe" => "Swipe(x1, y1, x2, y2): swipe from (x1, y1) to (x2, y2)",
        "Type" => "Type(text): type text into the focused input box",
        "Enter" => "Enter: press the enter key",
        "Switch_App" => "Switch_App: show the recent apps",
        "Back" => "Back: go back",
        "Home" => "Home: go to the home screen",
        "Wait" => "Wait: wait for the screen to update",
        _ => unreachable!(),
    };
    ATOMIC_OPERATION_NAMES
        .iter()
        .map(|n| doc(n))
        .collect::<Vec<_>>()
        .join("\n")
}
