//! Persona-configured tool-calling agent over a pluggable chat backend.

pub mod agent;
pub mod backend;
pub mod http;
pub mod personas;
pub mod tools;

pub use agent::{
    run_agent, run_turn, AgentConfig, AgentError, AgentTurn, Clock, Session, TraceEntry, Transcript, TurnPayload,
};
pub use backend::{
    BackendError, BackendReply, ChatBackend, KeywordBackend, Message, MockBackend, RequestedCall, ToolCall,
};
pub use http::{HttpBackend, HttpBackendConfig};
pub use personas::{all_personas, Persona, Role, UnknownPersona};
pub use tools::{build_tool_registry, ToolError, ToolRegistry, ToolSpec};
