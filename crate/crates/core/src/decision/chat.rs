use serde::{Deserialize, Serialize};
use std::time::Duration;

use super::BackendError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// Body of a chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmEndpointConfig {
    /// Prefix of the OpenAI-style API, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model_id: String,
    pub temperature: f64,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub think_tag_open: String,
    pub think_tag_close: String,
    pub max_in_flight: usize,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model_id: "deepseek-r1-distill-qwen-32b".into(),
            temperature: 0.0,
            timeout_ms: 120_000,
            max_retries: 2,
            think_tag_open: "<think>".into(),
            think_tag_close: "</think>".into(),
            max_in_flight: 8,
        }
    }
}

/// Anything that can answer a chat-completion request with the reply text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// Blocking HTTP transport for `{base_url}/chat/completions`.
pub struct HttpChatTransport {
    agent: ureq::Agent,
    url: String,
}

impl HttpChatTransport {
    pub fn new(config: &LlmEndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(true)
            .build()
            .into();
        Self {
            agent,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
        }
    }
}

impl ChatTransport for HttpChatTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(request)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let body: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(format!("bad response body: {e}")))?;
        body.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Transport("response has no choices[0].message.content".into()))
    }
}
