//! Remote chat-completion backend speaking the common JSON tool-calling schema.
//!
//! Request (`POST <endpoint>`):
//!
//! ```json
//! {"model": "...", "messages": [{"role": "system", "content": "..."}, ...],
//!  "tools": [{"type": "function", "function": {"name": "...", "description": "...", "parameters": {...}}}]}
//! ```
//!
//! The reply's `choices[0].message` either carries `tool_calls`
//! (`[{"id", "type": "function", "function": {"name", "arguments": "<json text>"}}]`)
//! or a text `content`.

use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::backend::{BackendError, BackendReply, ChatBackend, Message, RequestedCall};
use super::tools::ToolSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpBackendConfig {
    pub endpoint_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff: Duration,
}

impl HttpBackendConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            api_key: None,
            model: "gpt-4-turbo".to_string(),
            timeout: Duration::from_secs(60),
            max_retries: 2,
            backoff: Duration::from_millis(500),
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport { attempts: 0, message: e.to_string() })?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    fn send_once(&self, body: &Value) -> Result<Value, Attempt> {
        let mut req = self.client.post(&self.config.endpoint_url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.is_success() {
            return serde_json::from_str(&text)
                .map_err(|e| Attempt::Fatal(BackendError::Protocol(format!("invalid JSON body: {e}"))));
        }
        let err = BackendError::Status { status: status.as_u16(), body: truncate(&text, 500) };
        if status.is_server_error() || status.as_u16() == 429 {
            Err(Attempt::RetryStatus(err))
        } else {
            Err(Attempt::Fatal(err))
        }
    }
}

enum Attempt {
    Retry(String),
    RetryStatus(BackendError),
    Fatal(BackendError),
}

fn truncate(s: &str, n: usize) -> String {
    match s.char_indices().nth(n) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

pub fn wire_messages(messages: &[Message]) -> Vec<Value> {
    messages
        .iter()
        .map(|m| match m {
            Message::System { content } => json!({ "role": "system", "content": content }),
            Message::User { content } => json!({ "role": "user", "content": content }),
            Message::Assistant { content, tool_calls } => {
                let mut v = json!({ "role": "assistant", "content": content });
                if !tool_calls.is_empty() {
                    v["tool_calls"] = tool_calls
                        .iter()
                        .map(|c| {
                            json!({
                                "id": c.id,
                                "type": "function",
                                "function": { "name": c.name, "arguments": c.arguments.to_string() },
                            })
                        })
                        .collect();
                }
                v
            }
            Message::Tool { tool_call_id, name, content } => {
                json!({ "role": "tool", "tool_call_id": tool_call_id, "name": name, "content": content })
            }
        })
        .collect()
}

pub fn wire_tools(tools: &[ToolSpec]) -> Vec<Value> {
    tools
        .iter()
        .map(|t| {
            json!({
                "type": "function",
                "function": { "name": t.name, "description": t.description, "parameters": t.parameters_schema() },
            })
        })
        .collect()
}

/// Extracts the reply from a chat-completion response body.
pub fn parse_reply(body: &Value) -> Result<BackendReply, BackendError> {
    let msg = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Protocol("missing choices[0].message".into()))?;
    if let Some(calls) = msg.get("tool_calls").and_then(Value::as_array).filter(|c| !c.is_empty()) {
        let calls = calls
            .iter()
            .map(|c| {
                let f = c.get("function").ok_or_else(|| BackendError::Protocol("tool call without function".into()))?;
                let name = f
                    .get("name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| BackendError::Protocol("tool call without name".into()))?;
                // arguments arrive as JSON text; unparsable text is passed through so
                // the agent can report it back as an argument error
                let args = match f.get("arguments") {
                    Some(Value::String(s)) => serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.clone())),
                    Some(v) => v.clone(),
                    None => Value::Null,
                };
                Ok(RequestedCall {
                    id: c.get("id").and_then(Value::as_str).map(str::to_string),
                    name: name.to_string(),
                    args,
                })
            })
            .collect::<Result<Vec<_>, BackendError>>()?;
        return Ok(BackendReply::ToolCalls(calls));
    }
    match msg.get("content") {
        Some(Value::String(s)) => Ok(BackendReply::Text(s.clone())),
        _ => Err(BackendError::Protocol("message has neither tool_calls nor content".into())),
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, messages: &[Message], tools: &[ToolSpec]) -> Result<BackendReply, BackendError> {
        let mut body = json!({ "model": self.config.model, "messages": wire_messages(messages) });
        if !tools.is_empty() {
            body["tools"] = Value::Array(wire_tools(tools));
        }
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff.saturating_mul(1 << (attempt - 1).min(16));
                tracing::warn!(attempt, ?delay, error = %last, "retrying chat endpoint");
                thread::sleep(delay);
            }
            match self.send_once(&body) {
                Ok(v) => return parse_reply(&v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::RetryStatus(e)) if attempt + 1 == attempts => return Err(e),
                Err(Attempt::RetryStatus(e)) => last = e.to_string(),
                Err(Attempt::Retry(m)) => last = m,
            }
        }
        Err(BackendError::Transport { attempts, message: last })
    }

    fn kind(&self) -> &'static str {
        "remote"
    }
}
