//! Shortcuts: named, argument-parameterized sequences of atomic operations
//! guarded by a natural-language precondition.
//!
//! A proposal goes through [`validate_shortcut`] before it may enter long-term
//! memory. At use time the Operator's arguments are bound with
//! [`bind_arguments`], the precondition is checked by [`gate_precondition`], and
//! the expansion runs on the device in one decision iteration through
//! [`execute_shortcut`].

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::device::{Device, DeviceError};
use crate::memory::{ArgValue, AtomicOperation, ParamKind, ScreenState, ShortcutCall};
use crate::perception::PerceptionResult;

/// A parameter slot in an operation template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Slot {
    /// Refers to a shortcut argument by name.
    Argument(String),
    Literal {
        literal: ArgValue,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationTemplate {
    pub name: String,
    #[serde(default)]
    pub arguments_map: BTreeMap<String, Slot>,
}

impl OperationTemplate {
    pub fn new(name: &str, slots: &[(&str, Slot)]) -> Self {
        Self {
            name: name.to_string(),
            arguments_map: slots.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }

    /// Template whose every parameter is the shortcut argument of the same name.
    pub fn passthrough(name: &str, params: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            arguments_map: params
                .iter()
                .map(|p| (p.to_string(), Slot::Argument(p.to_string())))
                .collect(),
        }
    }
}

/// A shortcut as proposed or stored, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shortcut {
    pub name: String,
    #[serde(default)]
    pub arguments: Vec<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub precondition: String,
    #[serde(default)]
    pub operation_sequence: Vec<OperationTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("shortcut name `{0}` is not a valid identifier")]
    InvalidName(String),
    #[error("shortcut name `{0}` collides with a built-in action")]
    NameCollision(String),
    #[error("shortcut `{0}` has no precondition")]
    MissingPrecondition(String),
    #[error("shortcut `{0}` has an empty operation sequence")]
    EmptySequence(String),
    #[error("argument `{0}` is not a valid identifier")]
    InvalidArgumentName(String),
    #[error("argument `{0}` is declared more than once")]
    DuplicateArgument(String),
    #[error("operation {index}: `{name}` is not an atomic operation")]
    UnknownOperation { index: usize, name: String },
    #[error("operation {index}: `{op}` is missing parameter `{param}`")]
    MissingParameter { index: usize, op: String, param: String },
    #[error("operation {index}: `{op}` has no parameter `{param}`")]
    UnexpectedParameter { index: usize, op: String, param: String },
    #[error("operation {index}: parameter `{param}` references undeclared argument `{argument}`")]
    UnknownSlotReference {
        index: usize,
        param: String,
        argument: String,
    },
    #[error("operation {index}: literal for `{param}` must be a {expected:?}")]
    LiteralKind {
        index: usize,
        param: String,
        expected: ParamKind,
    },
    #[error("argument `{0}` is used both as a coordinate and as text")]
    ConflictingArgumentKind(String),
    #[error("argument `{0}` is declared but never used")]
    UnusedArgument(String),
}

impl ValidationError {
    /// Stable class name for reports.
    pub fn class(&self) -> &'static str {
        match self {
            ValidationError::InvalidName(_) => "invalid_name",
            ValidationError::NameCollision(_) => "name_collision",
            ValidationError::MissingPrecondition(_) => "missing_precondition",
            ValidationError::EmptySequence(_) => "empty_sequence",
            ValidationError::InvalidArgumentName(_) => "invalid_argument_name",
            ValidationError::DuplicateArgument(_) => "duplicate_argument",
            ValidationError::UnknownOperation { .. } => "unknown_operation",
            ValidationError::MissingParameter { .. } => "missing_parameter",
            ValidationError::UnexpectedParameter { .. } => "unexpected_parameter",
            ValidationError::UnknownSlotReference { .. } => "unknown_slot_reference",
            ValidationError::LiteralKind { .. } => "literal_kind",
            ValidationError::ConflictingArgumentKind(_) => "conflicting_argument_kind",
            ValidationError::UnusedArgument(_) => "unused_argument",
        }
    }
}

/// A shortcut that passed [`validate_shortcut`]. Only these enter long-term memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedShortcut {
    shortcut: Shortcut,
    kinds: BTreeMap<String, ParamKind>,
}

impl ValidatedShortcut {
    pub fn kind_of(&self, argument: &str) -> Option<ParamKind> {
        self.kinds.get(argument).copied()
    }

    pub fn into_inner(self) -> Shortcut {
        self.shortcut
    }
}

impl Deref for ValidatedShortcut {
    type Target = Shortcut;

    fn deref(&self) -> &Shortcut {
        &self.shortcut
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Names a shortcut may not take: the atomic operations and `Stop`.
fn reserved(name: &str) -> bool {
    crate::memory::ATOMIC_OPERATION_NAMES
        .iter()
        .chain(std::iter::once(&"Stop"))
        .any(|r| r.eq_ignore_ascii_case(name))
}

/// Static checks on a shortcut. Semantic sufficiency (does the sequence
/// actually achieve its description?) is not decidable here; a shortcut that
/// omits a needed step is still accepted.
pub fn validate_shortcut(candidate: Shortcut) -> Result<ValidatedShortcut, ValidationError> {
    let name = candidate.name.clone();
    if !is_identifier(&name) {
        return Err(ValidationError::InvalidName(name));
    }
    if reserved(&name) {
        return Err(ValidationError::NameCollision(name));
    }
    if candidate.precondition.trim().is_empty() {
        return Err(ValidationError::MissingPrecondition(name));
    }
    if candidate.operation_sequence.is_empty() {
        return Err(ValidationError::EmptySequence(name));
    }
    let mut declared = BTreeSet::new();
    for arg in &candidate.arguments {
        if !is_identifier(arg) {
            return Err(ValidationError::InvalidArgumentName(arg.clone()));
        }
        if !declared.insert(arg.as_str()) {
            return Err(ValidationError::DuplicateArgument(arg.clone()));
        }
    }

    let mut kinds: BTreeMap<String, ParamKind> = BTreeMap::new();
    for (index, template) in candidate.operation_sequence.iter().enumerate() {
        let params = AtomicOperation::parameters(&template.name).ok_or_else(|| ValidationError::UnknownOperation {
            index,
            name: template.name.clone(),
        })?;
        for (param, _) in params {
            if !template.arguments_map.contains_key(*param) {
                return Err(ValidationError::MissingParameter {
                    index,
                    op: template.name.clone(),
                    param: param.to_string(),
                });
            }
        }
        for (param, slot) in &template.arguments_map {
            let expected = params
                .iter()
                .find(|(p, _)| p == param)
                .map(|(_, k)| *k)
                .ok_or_else(|| ValidationError::UnexpectedParameter {
                    index,
                    op: template.name.clone(),
                    param: param.clone(),
                })?;
            match slot {
                Slot::Argument(arg) => {
                    if !declared.contains(arg.as_str()) {
                        return Err(ValidationError::UnknownSlotReference {
                            index,
                            param: param.clone(),
                            argument: arg.clone(),
                        });
                    }
                    match kinds.get(arg) {
                        Some(k) if *k != expected => return Err(ValidationError::ConflictingArgumentKind(arg.clone())),
                        _ => {
                            kinds.insert(arg.clone(), expected);
                        }
                    }
                }
                Slot::Literal { literal } => {
                    if literal.kind() != expected {
                        return Err(ValidationError::LiteralKind {
                            index,
                            param: param.clone(),
                            expected,
                        });
                    }
                }
            }
        }
    }
    if let Some(unused) = candidate.arguments.iter().find(|a| !kinds.contains_key(*a)) {
        return Err(ValidationError::UnusedArgument(unused.clone()));
    }
    Ok(ValidatedShortcut {
        shortcut: candidate,
        kinds,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BindingError {
    #[error("missing argument `{0}`")]
    Missing(String),
    #[error("unexpected argument `{0}`")]
    Extra(String),
    #[error("argument `{argument}` must be a {expected:?}")]
    WrongKind { argument: String, expected: ParamKind },
    #[error("argument `{0}` is out of coordinate range")]
    Range(String),
}

impl BindingError {
    pub fn argument(&self) -> &str {
        match self {
            BindingError::Missing(a) | BindingError::Extra(a) | BindingError::Range(a) => a,
            BindingError::WrongKind { argument, .. } => argument,
        }
    }
}

/// Substitutes named values into every slot. Values must cover exactly the
/// declared arguments; there are no defaults.
pub fn bind_arguments(
    shortcut: &ValidatedShortcut,
    values: &BTreeMap<String, ArgValue>,
) -> Result<ShortcutCall, BindingError> {
    for arg in &shortcut.arguments {
        match values.get(arg) {
            None => return Err(BindingError::Missing(arg.clone())),
            Some(v) => {
                let expected = shortcut.kinds[arg];
                if v.kind() != expected {
                    return Err(BindingError::WrongKind {
                        argument: arg.clone(),
                        expected,
                    });
                }
                if let ArgValue::Int(i) = v {
                    if i32::try_from(*i).is_err() {
                        return Err(BindingError::Range(arg.clone()));
                    }
                }
            }
        }
    }
    if let Some(extra) = values.keys().find(|k| !shortcut.arguments.contains(k)) {
        return Err(BindingError::Extra(extra.clone()));
    }

    let expansion = shortcut
        .operation_sequence
        .iter()
        .map(|template| {
            let named: BTreeMap<String, ArgValue> = template
                .arguments_map
                .iter()
                .map(|(param, slot)| {
                    let value = match slot {
                        Slot::Argument(a) => values[a].clone(),
                        Slot::Literal { literal } => literal.clone(),
                    };
                    (param.clone(), value)
                })
                .collect();
            AtomicOperation::from_named(&template.name, &named).expect("validated template binds")
        })
        .collect();
    Ok(ShortcutCall {
        name: shortcut.name.clone(),
        arguments: shortcut
            .arguments
            .iter()
            .map(|a| (a.clone(), values[a].clone()))
            .collect(),
        expansion,
    })
}

/// How shortcut preconditions are enforced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// The Operator's choice to call the shortcut is its assertion that the
    /// precondition holds; the engine does not second-guess it.
    #[default]
    ModelMediated,
    /// Deny text-input shortcuts when no input field is perceived.
    StrictHeuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum GateDecision {
    Allow,
    Deny { reason: String },
}

const TEXT_INPUT_PHRASES: [&str; 9] = [
    "text input",
    "input box",
    "input field",
    "text field",
    "text box",
    "search bar",
    "search box",
    "search field",
    "input bar",
];

fn requires_text_input(precondition: &str) -> bool {
    let lower = precondition.to_lowercase();
    TEXT_INPUT_PHRASES.iter().any(|p| lower.contains(p))
}

pub fn gate_precondition(shortcut: &ValidatedShortcut, perception: &PerceptionResult, mode: GateMode) -> GateDecision {
    match mode {
        GateMode::ModelMediated => GateDecision::Allow,
        GateMode::StrictHeuristic => {
            if requires_text_input(&shortcut.precondition) && !perception.elements.iter().any(|e| e.input_field) {
                GateDecision::Deny {
                    reason: format!(
                        "precondition of `{}` requires a text input box, but none is visible on the current screen",
                        shortcut.name
                    ),
                }
            } else {
                GateDecision::Allow
            }
        }
    }
}

#[derive(Debug)]
pub struct ShortcutFailure {
    pub index: usize,
    pub error: DeviceError,
}

/// Screens seen while running a shortcut: the starting screen, then one per
/// completed operation.
#[derive(Debug)]
pub struct ShortcutTrace {
    pub screens: Vec<ScreenState>,
    pub failure: Option<ShortcutFailure>,
}

impl ShortcutTrace {
    /// The last screen reached, successful or not.
    pub fn final_screen(&self) -> &ScreenState {
        self.screens.last().expect("trace holds the starting screen")
    }
}

/// Runs a bound sequence with no agent calls in between. Operations are checked
/// against the current screen bounds before dispatch; the first failure stops
/// the sequence and is reported with its index.
pub fn execute_shortcut(device: &mut dyn Device, start: ScreenState, operations: &[AtomicOperation]) -> ShortcutTrace {
    let mut screens = vec![start];
    for (index, op) in operations.iter().enumerate() {
        let current = screens.last().expect("non-empty");
        if !op.within_bounds(current.width, current.height) {
            return ShortcutTrace {
                screens,
                failure: Some(ShortcutFailure {
                    index,
                    error: DeviceError::OutOfBounds(op.clone()),
                }),
            };
        }
        match device.execute(op) {
            Ok(screen) => screens.push(screen),
            Err(error) => {
                return ShortcutTrace {
                    screens,
                    failure: Some(ShortcutFailure { index, error }),
                }
            }
        }
    }
    ShortcutTrace { screens, failure: None }
}

/// The search subroutine: tap a text box, type, press Enter.
pub fn tap_type_and_enter() -> Shortcut {
    Shortcut {
        name: "Tap_Type_and_Enter".into(),
        arguments: vec!["x".into(), "y".into(), "text".into()],
        description: "Tap an input box at (x, y), type the text, and press Enter.".into(),
        precondition: "There is a text input box on the current screen.".into(),
        operation_sequence: vec![
            OperationTemplate::passthrough("Tap", &["x", "y"]),
            OperationTemplate::passthrough("Type", &["text"]),
            OperationTemplate::passthrough("Enter", &[]),
        ],
    }
}
