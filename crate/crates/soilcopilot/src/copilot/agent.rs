//! The tool-calling loop and its transcript.

use std::thread;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::backend::{BackendError, BackendReply, ChatBackend, Message, RequestedCall, ToolCall};
use super::personas::Role;
use super::tools::{ToolRegistry, ToolSpec, SOC_PREDICTION};
use crate::formats::format_time;
use soilcopilot_core::Timestamp;

pub const DEFAULT_MAX_TOOL_CALLS: usize = 8;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("max_tool_calls must be at least 1")]
    ZeroCap,
}

/// Source of turn timestamps. `Logical` numbers turns from the epoch so
/// replays are byte-identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    Logical,
    System,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentConfig {
    pub max_tool_calls: usize,
    pub clock: Clock,
    /// Counties to watch for when linting; empty disables the lint.
    pub lint_counties: Vec<String>,
}

impl AgentConfig {
    pub fn new(max_tool_calls: usize) -> Self {
        Self { max_tool_calls, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TurnPayload {
    System { content: String },
    User { content: String },
    ToolCall { call_id: String, name: String, arguments: Value },
    ToolResult { call_id: String, name: String, is_error: bool, result: Value },
    AssistantText { content: String, truncated: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub seq: usize,
    pub timestamp: String,
    #[serde(flatten)]
    pub payload: TurnPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub transcript_id: String,
    pub session_id: String,
    pub persona: Role,
    pub turns: Vec<AgentTurn>,
    pub answer: String,
    pub truncated: bool,
    pub tool_calls: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lint_warnings: Vec<String>,
}

/// One traced tool invocation, as shown to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub call_id: String,
    pub name: String,
    pub arguments: Value,
    pub result: Value,
    pub is_error: bool,
}

impl Transcript {
    pub fn tool_trace(&self) -> Vec<TraceEntry> {
        let mut out: Vec<TraceEntry> = Vec::new();
        for t in &self.turns {
            match &t.payload {
                TurnPayload::ToolCall { call_id, name, arguments } => out.push(TraceEntry {
                    call_id: call_id.clone(),
                    name: name.clone(),
                    arguments: arguments.clone(),
                    result: Value::Null,
                    is_error: false,
                }),
                TurnPayload::ToolResult { call_id, result, is_error, .. } => {
                    if let Some(e) = out.iter_mut().rev().find(|e| &e.call_id == call_id) {
                        e.result = result.clone();
                        e.is_error = *is_error;
                    }
                }
                _ => {}
            }
        }
        out
    }
}

/// Conversation state carried across turns of one session.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub persona: Role,
    messages: Vec<Message>,
    calls_issued: usize,
    turns_completed: usize,
}

impl Session {
    pub fn new(id: impl Into<String>, persona: Role) -> Self {
        Self {
            id: id.into(),
            persona,
            messages: vec![Message::System { content: persona.system_prompt().to_string() }],
            calls_issued: 0,
            turns_completed: 0,
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn turns_completed(&self) -> usize {
        self.turns_completed
    }
}

struct TurnLog {
    clock: Clock,
    turns: Vec<AgentTurn>,
}

impl TurnLog {
    fn push(&mut self, payload: TurnPayload) {
        let seq = self.turns.len();
        let timestamp = match self.clock {
            Clock::Logical => format_time(Timestamp(seq as i64)),
            Clock::System => Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        };
        self.turns.push(AgentTurn { seq, timestamp, payload });
    }
}

fn execute(registry: &ToolRegistry, calls: &[ToolCall]) -> Vec<Result<Value, Value>> {
    let run = |c: &ToolCall| registry.invoke(&c.name, &c.arguments).map_err(|e| e.to_json());
    if calls.len() <= 1 {
        return calls.iter().map(run).collect();
    }
    thread::scope(|s| {
        let handles: Vec<_> = calls.iter().map(|c| s.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join().unwrap_or_else(|_| {
                    Err(super::tools::ToolError::new("tool_panicked", "tool handler panicked").to_json())
                })
            })
            .collect()
    })
}

fn truncation_notice(cap: usize) -> String {
    format!(
        "Stopped after {cap} tool calls without a final answer from the model. \
         The tool results gathered so far are listed in the trace."
    )
}

/// Runs one user turn to completion on `session`.
///
/// Each backend reply is either text, which ends the turn, or a batch of
/// tool calls. Calls in a batch run concurrently and their results are
/// appended in call order. Once `max_tool_calls` calls have run, a further
/// request for tools ends the turn with a truncated notice. On backend
/// failure the session is left as it was before the turn.
pub fn run_turn(
    session: &mut Session,
    prompt: &str,
    backend: &dyn ChatBackend,
    registry: &ToolRegistry,
    config: &AgentConfig,
) -> Result<Transcript, AgentError> {
    if config.max_tool_calls == 0 {
        return Err(AgentError::ZeroCap);
    }
    let rollback = (session.messages.len(), session.calls_issued);
    let result = drive(session, prompt, backend, registry, config);
    if result.is_err() {
        session.messages.truncate(rollback.0);
        session.calls_issued = rollback.1;
    }
    result
}

fn drive(
    session: &mut Session,
    prompt: &str,
    backend: &dyn ChatBackend,
    registry: &ToolRegistry,
    config: &AgentConfig,
) -> Result<Transcript, AgentError> {
    let specs: Vec<ToolSpec> = registry.specs().cloned().collect();
    let mut log = TurnLog { clock: config.clock, turns: Vec::new() };
    log.push(TurnPayload::System { content: session.persona.system_prompt().to_string() });
    log.push(TurnPayload::User { content: prompt.to_string() });
    session.messages.push(Message::User { content: prompt.to_string() });

    let cap = config.max_tool_calls;
    let mut made = 0usize;
    let mut called_soc = false;
    let (answer, truncated) = loop {
        let requested: Vec<RequestedCall> = match backend.complete(&session.messages, &specs)? {
            BackendReply::Text(t) => break (t, false),
            BackendReply::ToolCalls(c) if c.is_empty() => break (String::new(), false),
            BackendReply::ToolCalls(c) => c,
        };
        if made == cap {
            break (truncation_notice(cap), true);
        }
        let take = requested.len().min(cap - made);
        let calls: Vec<ToolCall> = requested
            .into_iter()
            .take(take)
            .map(|r| {
                session.calls_issued += 1;
                ToolCall {
                    id: r.id.unwrap_or_else(|| format!("call_{}", session.calls_issued)),
                    name: r.name,
                    arguments: r.args,
                }
            })
            .collect();
        let results = execute(registry, &calls);
        session.messages.push(Message::Assistant { content: None, tool_calls: calls.clone() });
        for (call, res) in calls.into_iter().zip(results) {
            called_soc |= call.name == SOC_PREDICTION;
            let (is_error, value) = match res {
                Ok(v) => (false, v),
                Err(v) => (true, v),
            };
            session.messages.push(Message::Tool {
                tool_call_id: call.id.clone(),
                name: call.name.clone(),
                content: value.to_string(),
            });
            log.push(TurnPayload::ToolCall {
                call_id: call.id.clone(),
                name: call.name.clone(),
                arguments: call.arguments,
            });
            log.push(TurnPayload::ToolResult { call_id: call.id, name: call.name, is_error, result: value });
        }
        made += take;
    };
    session.messages.push(Message::Assistant { content: Some(answer.clone()), tool_calls: Vec::new() });
    log.push(TurnPayload::AssistantText { content: answer.clone(), truncated });

    let lower = prompt.to_lowercase();
    let lint_warnings = if called_soc {
        Vec::new()
    } else {
        config
            .lint_counties
            .iter()
            .filter(|c| lower.contains(&c.to_lowercase()))
            .map(|c| format!("answer mentions {c} but {SOC_PREDICTION} was never called"))
            .collect()
    };
    session.turns_completed += 1;
    Ok(Transcript {
        transcript_id: format!("{}-{}", session.id, session.turns_completed),
        session_id: session.id.clone(),
        persona: session.persona,
        turns: log.turns,
        answer,
        truncated,
        tool_calls: made,
        lint_warnings,
    })
}

/// Single-shot convenience over [`run_turn`] with a fresh session.
pub fn run_agent(
    prompt: &str,
    persona: Role,
    backend: &dyn ChatBackend,
    registry: &ToolRegistry,
    config: &AgentConfig,
    session_id: &str,
) -> Result<Transcript, AgentError> {
    let mut session = Session::new(session_id, persona);
    run_turn(&mut session, prompt, backend, registry, config)
}
