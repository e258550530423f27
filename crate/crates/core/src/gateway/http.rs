use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{GatewayError, ModelBackend, ModelRequest, Part};

pub const ENV_ENDPOINT: &str = "PHONEAGENT_MODEL_ENDPOINT";
pub const ENV_API_KEY: &str = "PHONEAGENT_API_KEY";
pub const ENV_MODEL: &str = "PHONEAGENT_MODEL";

/// Chat-completions client. Images travel as base64 PNG data URLs.
pub struct HttpBackend {
    endpoint: String,
    api_key: String,
    model: String,
    attempts: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            model: model.into(),
            attempts: 3,
            backoff: Duration::from_secs(1),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build(),
        }
    }

    /// Reads the endpoint, key and model name from the environment.
    pub fn from_env() -> Result<Self, GatewayError> {
        let get = |name: &str| std::env::var(name).map_err(|_| GatewayError::Config(format!("{name} is not set")));
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-4o".into());
        Ok(Self::new(get(ENV_ENDPOINT)?, get(ENV_API_KEY)?, model))
    }

    /// Total attempts and the first backoff delay, which doubles per retry.
    pub fn with_retry(mut self, attempts: u32, backoff: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.backoff = backoff;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = ureq::AgentBuilder::new().timeout(timeout).build();
        self
    }

    pub fn request_body(&self, request: &ModelRequest) -> Result<Value, GatewayError> {
        let mut messages = Vec::with_capacity(request.messages.len());
        for m in &request.messages {
            let mut content = Vec::with_capacity(m.parts.len());
            for p in &m.parts {
                match p {
                    Part::Text(t) => content.push(json!({"type": "text", "text": t})),
                    Part::Image(image) => {
                        let bytes = image
                            .read_bytes()
                            .map_err(|e| GatewayError::InvalidRequest(format!("unreadable image: {e}")))?;
                        let url = format!(
                            "data:image/png;base64,{}",
                            base64::engine::general_purpose::STANDARD.encode(bytes)
                        );
                        content.push(json!({"type": "image_url", "image_url": {"url": url}}));
                    }
                }
            }
            messages.push(json!({"role": m.role.as_str(), "content": content}));
        }
        Ok(json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }))
    }

    fn attempt(&self, body: &Value) -> Result<String, String> {
        let response = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body.clone())
            .map_err(|e| match e {
                ureq::Error::Status(code, _) => format!("status {code}"),
                other => other.to_string(),
            })?;
        let value: Value = response.into_json().map_err(|e| format!("unreadable body: {e}"))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }
}

impl ModelBackend for HttpBackend {
    fn complete(&self, request: &ModelRequest) -> Result<String, GatewayError> {
        let body = self.request_body(request)?;
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("model request attempt {attempt}/{} failed: {e}", self.attempts);
                    last = e;
                }
            }
            if attempt < self.attempts {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(GatewayError::Transport {
            attempts: self.attempts,
            message: last,
        })
    }
}
