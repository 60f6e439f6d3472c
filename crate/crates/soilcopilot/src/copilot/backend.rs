//! Chat-completion backends: the trait, the scripted mock and a keyword mock.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::tools::ToolSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Message {
    System {
        content: String,
    },
    User {
        content: String,
    },
    Assistant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        content: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        tool_calls: Vec<ToolCall>,
    },
    Tool {
        tool_call_id: String,
        name: String,
        content: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

/// A tool call as proposed by the backend; the id is optional for mocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestedCall {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub name: String,
    #[serde(default, alias = "arguments")]
    pub args: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendReply {
    ToolCalls(Vec<RequestedCall>),
    Text(String),
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("chat endpoint unreachable after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("chat endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("chat endpoint sent an unusable response: {0}")]
    Protocol(String),
    #[error("mock script exhausted after {0} steps")]
    ScriptExhausted(usize),
    #[error("mock script {path}: {message}")]
    Script { path: String, message: String },
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[Message], tools: &[ToolSpec]) -> Result<BackendReply, BackendError>;

    /// Short name recorded in health output.
    fn kind(&self) -> &'static str;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptStep {
    ToolCalls { tool_calls: Vec<RequestedCall> },
    Text { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Steps(Vec<ScriptStep>),
    Looping {
        #[serde(rename = "loop")]
        repeat: bool,
        steps: Vec<ScriptStep>,
    },
}

/// Replays a fixed list of replies, one per `complete` call.
///
/// A script file is either a JSON list of steps or
/// `{"loop": true, "steps": [...]}`, which cycles through the steps forever.
#[derive(Debug)]
pub struct MockBackend {
    steps: Vec<ScriptStep>,
    repeat: bool,
    cursor: Mutex<usize>,
}

impl MockBackend {
    pub fn new(steps: Vec<ScriptStep>, repeat: bool) -> Self {
        Self { steps, repeat, cursor: Mutex::new(0) }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(match serde_json::from_str::<ScriptFile>(text)? {
            ScriptFile::Steps(steps) => Self::new(steps, false),
            ScriptFile::Looping { repeat, steps } => Self::new(steps, repeat),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let script_err = |message: String| BackendError::Script { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| script_err(e.to_string()))?;
        let mock = Self::from_json(&text).map_err(|e| script_err(e.to_string()))?;
        if mock.steps.is_empty() {
            return Err(script_err("script has no steps".into()));
        }
        Ok(mock)
    }

    pub fn steps(&self) -> &[ScriptStep] {
        &self.steps
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, _messages: &[Message], _tools: &[ToolSpec]) -> Result<BackendReply, BackendError> {
        let mut cursor = self.cursor.lock().unwrap_or_else(|e| e.into_inner());
        let step = if self.repeat && !self.steps.is_empty() {
            &self.steps[*cursor % self.steps.len()]
        } else {
            self.steps.get(*cursor).ok_or(BackendError::ScriptExhausted(self.steps.len()))?
        };
        *cursor += 1;
        Ok(match step {
            ScriptStep::ToolCalls { tool_calls } => BackendReply::ToolCalls(tool_calls.clone()),
            ScriptStep::Text { text } => BackendReply::Text(text.clone()),
        })
    }

    fn kind(&self) -> &'static str {
        "mock-script"
    }
}

/// Offline stand-in for a model: looks up every county named in the latest
/// user message, then answers by restating the tool results.
///
/// Only meant for demos and UI development without an endpoint.
#[derive(Debug, Clone)]
pub struct KeywordBackend {
    counties: Vec<String>,
}

impl KeywordBackend {
    pub fn new(counties: impl IntoIterator<Item = String>) -> Self {
        let mut counties: Vec<String> = counties.into_iter().collect();
        // longest first so "San Joaquin" wins over a hypothetical "Joaquin"
        counties.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        Self { counties }
    }

    fn mentioned(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        let mut hits: Vec<(usize, String)> = Vec::new();
        for c in &self.counties {
            if let Some(pos) = lower.find(&c.to_lowercase()) {
                let covered = hits.iter().any(|(p, h)| pos >= *p && pos < p + h.len());
                if !covered {
                    hits.push((pos, c.clone()));
                }
            }
        }
        hits.sort();
        hits.into_iter().map(|(_, c)| c).collect()
    }

    fn plan(&self, prompt: &str) -> Vec<RequestedCall> {
        let lower = prompt.to_lowercase();
        let mut calls = Vec::new();
        for county in self.mentioned(prompt) {
            let mut push = |name: &str| {
                calls.push(RequestedCall {
                    id: None,
                    name: name.to_string(),
                    args: serde_json::json!({ "county": county }),
                })
            };
            push(super::tools::SOC_PREDICTION);
            if lower.contains("drought") {
                push(super::tools::DROUGHT_CONDITIONS);
            }
            if lower.contains("fire") {
                push(super::tools::WILDFIRE_INCIDENTS);
            }
            if lower.contains("crop") {
                push(super::tools::CROP_TYPES_AND_YEARS);
            }
            if lower.contains("till") {
                push(super::tools::TILLAGE_SCALE);
            }
        }
        if ["citation", "cite", "evidence", "support", "research"].iter().any(|w| lower.contains(w)) {
            calls.push(RequestedCall {
                id: None,
                name: super::tools::SUPPORT_ARGUMENTS.to_string(),
                args: serde_json::json!({ "query": prompt }),
            });
        }
        calls
    }
}

impl ChatBackend for KeywordBackend {
    fn complete(&self, messages: &[Message], _tools: &[ToolSpec]) -> Result<BackendReply, BackendError> {
        let last_user = messages.iter().rposition(|m| matches!(m, Message::User { .. }));
        let Some(u) = last_user else {
            return Ok(BackendReply::Text("Please ask a question about a county.".into()));
        };
        let results: Vec<(&str, &str)> = messages[u..]
            .iter()
            .filter_map(|m| match m {
                Message::Tool { name, content, .. } => Some((name.as_str(), content.as_str())),
                _ => None,
            })
            .collect();
        if results.is_empty() {
            let Message::User { content } = &messages[u] else { unreachable!() };
            let calls = self.plan(content);
            if !calls.is_empty() {
                return Ok(BackendReply::ToolCalls(calls));
            }
            return Ok(BackendReply::Text(
                "I could not find a known county in the question. Name a county to look up its soil data.".into(),
            ));
        }
        let mut text = String::from("Here is what the data tools returned:");
        for (name, content) in results {
            text.push_str(&format!("\n- {name}: {content}"));
        }
        Ok(BackendReply::Text(text))
    }

    fn kind(&self) -> &'static str {
        "mock-keyword"
    }
}
