//! Chat-style completion over text and image parts, with a scripted backend
//! for deterministic runs and an HTTP backend for real models.

mod audit;
mod http;
mod script;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::memory::ImageRef;

pub use audit::{describe_image, AuditEntry, AuditLog, AuditMessage};
pub use http::{HttpBackend, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};
pub use script::{MatchKey, ScriptBook, ScriptEntry, ScriptResponse, ScriptedBackend};

/// Which agent issued a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Manager,
    Operator,
    ActionReflector,
    Notetaker,
    TipReflector,
    ShortcutReflector,
    TipRetriever,
    ShortcutRetriever,
}

impl AgentRole {
    pub const ALL: [AgentRole; 8] = [
        AgentRole::Manager,
        AgentRole::Operator,
        AgentRole::ActionReflector,
        AgentRole::Notetaker,
        AgentRole::TipReflector,
        AgentRole::ShortcutReflector,
        AgentRole::TipRetriever,
        AgentRole::ShortcutRetriever,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Manager => "manager",
            AgentRole::Operator => "operator",
            AgentRole::ActionReflector => "action_reflector",
            AgentRole::Notetaker => "notetaker",
            AgentRole::TipReflector => "tip_reflector",
            AgentRole::ShortcutReflector => "shortcut_reflector",
            AgentRole::TipRetriever => "tip_retriever",
            AgentRole::ShortcutRetriever => "shortcut_retriever",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image(ImageRef),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            parts: vec![Part::Text(text.into())],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub caller: AgentRole,
    /// Task the request belongs to. Routing metadata only; never sent to a model.
    pub task: Option<String>,
    pub messages: Vec<Message>,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl ModelRequest {
    /// A system prompt plus one user turn carrying `user` and the screenshots.
    pub fn new(caller: AgentRole, system: &str, user: String, images: Vec<ImageRef>) -> Self {
        let mut parts = vec![Part::Text(user)];
        parts.extend(images.into_iter().map(Part::Image));
        Self {
            caller,
            task: None,
            messages: vec![
                Message::text(Role::System, system),
                Message {
                    role: Role::User,
                    parts,
                },
            ],
            temperature: 0.0,
            max_tokens: 2048,
        }
    }

    /// Every text part, in order, joined by newlines. Script `contains` keys
    /// and prompt-content checks match against this.
    pub fn text(&self) -> String {
        let mut out = Vec::new();
        for m in &self.messages {
            for p in &m.parts {
                if let Part::Text(t) = p {
                    out.push(t.as_str());
                }
            }
        }
        out.join("\n")
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageRef> {
        self.messages.iter().flat_map(|m| &m.parts).filter_map(|p| match p {
            Part::Image(i) => Some(i),
            Part::Text(_) => None,
        })
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no messages".into()));
        }
        for image in self.images() {
            if let ImageRef::Path(p) = image {
                if !p.is_file() {
                    return Err(GatewayError::InvalidRequest(format!(
                        "image {} is not readable",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid model request: {0}")]
    InvalidRequest(String),
    #[error("model transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("model response is malformed: {0}")]
    Malformed(String),
    #[error("no scripted response for {caller} at step {step}")]
    ScriptMiss { caller: AgentRole, step: usize },
    #[error("{count} scripted responses match {caller} at step {step}")]
    ScriptAmbiguous {
        caller: AgentRole,
        step: usize,
        count: usize,
    },
    #[error("backend configuration: {0}")]
    Config(String),
}

pub trait ModelBackend: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<String, GatewayError>;
}

impl<B: ModelBackend + ?Sized> ModelBackend for &B {
    fn complete(&self, request: &ModelRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
}

impl<B: ModelBackend + ?Sized> ModelBackend for Box<B> {
    fn complete(&self, request: &ModelRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
}

/// Validates, completes and records one request in `audit`.
pub fn complete_audited(
    backend: &dyn ModelBackend,
    request: &ModelRequest,
    step: usize,
    audit: &mut AuditLog,
) -> Result<String, GatewayError> {
    let result = request.validate().and_then(|()| backend.complete(request));
    audit.record(step, request, &result);
    result
}
