//! The action space: nine atomic operations, shortcut invocations, and the
//! terminal `Stop` action.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Kind of value an operation parameter accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Pixel coordinate.
    Coordinate,
    Text,
}

/// A bound argument value, as written in an `ACTION:` line or a shortcut literal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    Int(i64),
    Text(String),
}

impl ArgValue {
    pub fn kind(&self) -> ParamKind {
        match self {
            ArgValue::Int(_) => ParamKind::Coordinate,
            ArgValue::Text(_) => ParamKind::Text,
        }
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Int(v) => write!(f, "{v}"),
            // JSON string escaping is also what the call-expression parser accepts.
            ArgValue::Text(s) => write!(f, "{}", serde_json::to_string(s).expect("string encodes")),
        }
    }
}

/// One of the nine primitive device interactions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum AtomicOperation {
    #[serde(rename = "Open_App")]
    OpenApp {
        app_name: String,
    },
    Tap {
        x: i32,
        y: i32,
    },
    Swipe {
        x1: i32,
        y1: i32,
        x2: i32,
        y2: i32,
    },
    Type {
        text: String,
    },
    Enter,
    #[serde(rename = "Switch_App")]
    SwitchApp,
    Back,
    Home,
    Wait,
}

/// Canonical names of the atomic operations, in table order.
pub const ATOMIC_OPERATION_NAMES: [&str; 9] = [
    "Open_App",
    "Tap",
    "Swipe",
    "Type",
    "Enter",
    "Switch_App",
    "Back",
    "Home",
    "Wait",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OperationError {
    #[error("unknown atomic operation `{0}`")]
    UnknownOperation(String),
    #[error("operation `{op}` is missing parameter `{param}`")]
    MissingParameter { op: String, param: String },
    #[error("operation `{op}` has no parameter `{param}`")]
    UnexpectedParameter { op: String, param: String },
    #[error("parameter `{param}` of `{op}` expects a {expected:?} value")]
    WrongKind {
        op: String,
        param: String,
        expected: ParamKind,
    },
    #[error("coordinate `{param}` of `{op}` is out of range: {value}")]
    CoordinateRange { op: String, param: String, value: i64 },
}

impl AtomicOperation {
    pub fn is_atomic_name(name: &str) -> bool {
        ATOMIC_OPERATION_NAMES.contains(&name)
    }

    /// Declared parameters of an atomic operation, or `None` for unknown names.
    pub fn parameters(name: &str) -> Option<&'static [(&'static str, ParamKind)]> {
        use ParamKind::*;
        Some(match name {
            "Open_App" => &[("app_name", Text)],
            "Tap" => &[("x", Coordinate), ("y", Coordinate)],
            "Swipe" => &[
                ("x1", Coordinate),
                ("y1", Coordinate),
                ("x2", Coordinate),
                ("y2", Coordinate),
            ],
            "Type" => &[("text", Text)],
            "Enter" | "Switch_App" | "Back" | "Home" | "Wait" => &[],
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AtomicOperation::OpenApp { .. } => "Open_App",
            AtomicOperation::Tap { .. } => "Tap",
            AtomicOperation::Swipe { .. } => "Swipe",
            AtomicOperation::Type { .. } => "Type",
            AtomicOperation::Enter => "Enter",
            AtomicOperation::SwitchApp => "Switch_App",
            AtomicOperation::Back => "Back",
            AtomicOperation::Home => "Home",
            AtomicOperation::Wait => "Wait",
        }
    }

    /// Builds an operation from named arguments. Every declared parameter must
    /// be present with the right kind, and nothing else.
    pub fn from_named(name: &str, args: &BTreeMap<String, ArgValue>) -> Result<Self, OperationError> {
        let params = Self::parameters(name).ok_or_else(|| OperationError::UnknownOperation(name.to_string()))?;
        for key in args.keys() {
            if !params.iter().any(|(p, _)| p == key) {
                return Err(OperationError::UnexpectedParameter {
                    op: name.to_string(),
                    param: key.clone(),
                });
            }
        }
        let coord = |param: &str| -> Result<i32, OperationError> {
            match args.get(param) {
                None => Err(OperationError::MissingParameter {
                    op: name.to_string(),
                    param: param.to_string(),
                }),
                Some(ArgValue::Int(v)) => i32::try_from(*v).map_err(|_| OperationError::CoordinateRange {
                    op: name.to_string(),
                    param: param.to_string(),
                    value: *v,
                }),
                Some(ArgValue::Text(_)) => Err(OperationError::WrongKind {
                    op: name.to_string(),
                    param: param.to_string(),
                    expected: ParamKind::Coordinate,
                }),
            }
        };
        let text = |param: &str| -> Result<String, OperationError> {
            match args.get(param) {
                None => Err(OperationError::MissingParameter {
                    op: name.to_string(),
                    param: param.to_string(),
                }),
                Some(ArgValue::Text(s)) => Ok(s.clone()),
                Some(ArgValue::Int(_)) => Err(OperationError::WrongKind {
                    op: name.to_string(),
                    param: param.to_string(),
                    expected: ParamKind::Text,
                }),
            }
        };
        Ok(match name {
            "Open_App" => AtomicOperation::OpenApp {
                app_name: text("app_name")?,
            },
            "Tap" => AtomicOperation::Tap {
                x: coord("x")?,
                y: coord("y")?,
            },
            "Swipe" => AtomicOperation::Swipe {
                x1: coord("x1")?,
                y1: coord("y1")?,
                x2: coord("x2")?,
                y2: coord("y2")?,
            },
            "Type" => AtomicOperation::Type { text: text("text")? },
            "Enter" => AtomicOperation::Enter,
            "Switch_App" => AtomicOperation::SwitchApp,
            "Back" => AtomicOperation::Back,
            "Home" => AtomicOperation::Home,
            "Wait" => AtomicOperation::Wait,
            _ => unreachable!("parameters() accepted the name"),
        })
    }

    /// Positional arguments in declaration order.
    pub fn arguments(&self) -> Vec<ArgValue> {
        match self {
            AtomicOperation::OpenApp { app_name } => vec![ArgValue::Text(app_name.clone())],
            AtomicOperation::Tap { x, y } => vec![ArgValue::Int(*x as i64), ArgValue::Int(*y as i64)],
            AtomicOperation::Swipe { x1, y1, x2, y2 } => {
                [x1, y1, x2, y2].into_iter().map(|v| ArgValue::Int(*v as i64)).collect()
            }
            AtomicOperation::Type { text } => vec![ArgValue::Text(text.clone())],
            _ => Vec::new(),
        }
    }

    /// Coordinates this operation touches.
    pub fn points(&self) -> Vec<(i32, i32)> {
        match self {
            AtomicOperation::Tap { x, y } => vec![(*x, *y)],
            AtomicOperation::Swipe { x1, y1, x2, y2 } => vec![(*x1, *y1), (*x2, *y2)],
            _ => Vec::new(),
        }
    }

    /// True when every coordinate lies in `[0, width] x [0, height]`.
    pub fn within_bounds(&self, width: u32, height: u32) -> bool {
        self.points()
            .into_iter()
            .all(|(x, y)| x >= 0 && y >= 0 && x as u32 <= width && y as u32 <= height)
    }
}

fn write_call(f: &mut fmt::Formatter<'_>, name: &str, args: &[ArgValue]) -> fmt::Result {
    write!(f, "{name}(")?;
    for (i, arg) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{arg}")?;
    }
    f.write_str(")")
}

impl fmt::Display for AtomicOperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_call(f, self.name(), &self.arguments())
    }
}

/// A shortcut invocation with its arguments bound and expanded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortcutCall {
    pub name: String,
    /// Arguments in the shortcut's declaration order.
    pub arguments: Vec<(String, ArgValue)>,
    pub expansion: Vec<AtomicOperation>,
}

/// What the Operator decided to do at one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Atomic {
        operation: AtomicOperation,
    },
    Shortcut {
        call: ShortcutCall,
    },
    /// Self-reported completion.
    Stop {
        message: String,
    },
}

impl Action {
    pub fn atomic(operation: AtomicOperation) -> Self {
        Action::Atomic { operation }
    }

    /// Operations whose repetition does not count toward the repeated-action limit.
    pub fn exempt_from_repetition(&self) -> bool {
        matches!(
            self,
            Action::Atomic {
                operation: AtomicOperation::Swipe { .. } | AtomicOperation::Back
            }
        )
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Atomic { operation } => operation.fmt(f),
            Action::Shortcut { call } => {
                let args: Vec<ArgValue> = call.arguments.iter().map(|(_, v)| v.clone()).collect();
                write_call(f, &call.name, &args)
            }
            Action::Stop { message } => write_call(f, "Stop", &[ArgValue::Text(message.clone())]),
        }
    }
}
