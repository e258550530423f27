use serde::{Deserialize, Serialize};

use super::{AgentRole, GatewayError, ModelRequest, Part, Role};
use crate::memory::{hex_digest, ImageRef};

/// Stable textual handle for an image part.
pub fn describe_image(image: &ImageRef) -> String {
    match image {
        ImageRef::Path(p) => p.display().to_string(),
        ImageRef::Png(bytes) => format!("png:sha256:{}", &hex_digest(bytes)[..16]),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: usize,
    /// Loop step the request belongs to; evolution calls use the final step count.
    pub step: usize,
    pub caller: AgentRole,
    pub messages: Vec<AuditMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AuditEntry {
    pub fn request_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Every request/response pair of a task, in call order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditLog {
    pub entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, step: usize, request: &ModelRequest, result: &Result<String, GatewayError>) {
        let messages = request
            .messages
            .iter()
            .map(|m| {
                let mut text = Vec::new();
                let mut images = Vec::new();
                for p in &m.parts {
                    match p {
                        Part::Text(t) => text.push(t.as_str()),
                        Part::Image(i) => images.push(describe_image(i)),
                    }
                }
                AuditMessage {
                    role: m.role,
                    text: text.join("\n"),
                    images,
                }
            })
            .collect();
        let (response, error) = match result {
            Ok(r) => (Some(r.clone()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.entries.push(AuditEntry {
            seq: self.entries.len(),
            step,
            caller: request.caller,
            messages,
            response,
            error,
        });
    }

    pub fn by_caller(&self, caller: AgentRole) -> impl Iterator<Item = &AuditEntry> {
        self.entries.iter().filter(move |e| e.caller == caller)
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("audit entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }
}
