//! HTTP chat backend against a local stand-in endpoint.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use soilcopilot::copilot::{
    build_tool_registry, run_agent, AgentConfig, BackendError, BackendReply, ChatBackend, HttpBackend,
    HttpBackendConfig, Message, Role,
};
use soilcopilot::store::AgroStore;

#[derive(Default)]
struct Endpoint {
    hits: AtomicUsize,
    fail_first: usize,
    fail_status: u16,
    bodies: Mutex<Vec<Value>>,
}

async fn completions(State(ep): State<Arc<Endpoint>>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = ep.hits.fetch_add(1, Ordering::SeqCst);
    ep.bodies.lock().unwrap().push(body.clone());
    if n < ep.fail_first {
        return (StatusCode::from_u16(ep.fail_status).unwrap(), Json(json!({ "error": "busy" })));
    }
    let has_tool_result = body["messages"].as_array().unwrap().iter().any(|m| m["role"] == "tool");
    let message = if has_tool_result {
        json!({ "role": "assistant", "content": "Tulare held at 5.58 then 5.48." })
    } else {
        json!({
            "role": "assistant",
            "content": null,
            "tool_calls": [{
                "id": "abc",
                "type": "function",
                "function": { "name": "soc_prediction", "arguments": "{\"county\":\"Tulare\"}" }
            }]
        })
    };
    (StatusCode::OK, Json(json!({ "choices": [{ "index": 0, "message": message }] })))
}

fn spawn_endpoint(ep: Arc<Endpoint>) -> (SocketAddr, tokio::runtime::Runtime) {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(ep);
    rt.spawn(async move { axum::serve(listener, app).await.unwrap() });
    (addr, rt)
}

fn config(addr: SocketAddr) -> HttpBackendConfig {
    HttpBackendConfig {
        api_key: Some("test-key".into()),
        timeout: Duration::from_secs(5),
        backoff: Duration::from_millis(1),
        ..HttpBackendConfig::new(format!("http://{addr}/v1/chat/completions"))
    }
}

#[test]
fn full_agent_loop_over_http() {
    let ep = Arc::new(Endpoint::default());
    let (addr, _rt) = spawn_endpoint(ep.clone());
    let backend = HttpBackend::new(config(addr)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut store = AgroStore::open(dir.path()).unwrap();
    store.ingest_dir(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/county"))).unwrap();
    let registry = build_tool_registry(Arc::new(store), None);
    let t = run_agent("Tulare?", Role::Agronomist, &backend, &registry, &AgentConfig::new(8), "r").unwrap();

    assert_eq!(t.answer, "Tulare held at 5.58 then 5.48.");
    assert_eq!(t.tool_calls, 1);
    let trace = t.tool_trace();
    assert_eq!(trace[0].result, json!({ "soc_2016_pct": 5.58, "soc_2023_pct": 5.48 }));
    assert_eq!(ep.hits.load(Ordering::SeqCst), 2);

    let bodies = ep.bodies.lock().unwrap();
    assert_eq!(bodies[0]["model"], "gpt-4-turbo");
    assert_eq!(bodies[0]["tools"].as_array().unwrap().len(), 6);
    assert_eq!(bodies[0]["messages"][0]["role"], "system");
    let second = bodies[1]["messages"].as_array().unwrap();
    let tool_msg = second.iter().find(|m| m["role"] == "tool").unwrap();
    let call_msg = second.iter().find(|m| m["role"] == "assistant").unwrap();
    assert_eq!(tool_msg["tool_call_id"], call_msg["tool_calls"][0]["id"]);
}

#[test]
fn server_errors_are_retried() {
    let ep = Arc::new(Endpoint { fail_first: 2, fail_status: 503, ..Endpoint::default() });
    let (addr, _rt) = spawn_endpoint(ep.clone());
    let backend = HttpBackend::new(config(addr)).unwrap();
    let reply = backend.complete(&[Message::User { content: "hi".into() }], &[]).unwrap();
    assert!(matches!(reply, BackendReply::ToolCalls(ref c) if c[0].name == "soc_prediction"));
    assert_eq!(ep.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_fail_fast() {
    let ep = Arc::new(Endpoint { fail_first: 5, fail_status: 401, ..Endpoint::default() });
    let (addr, _rt) = spawn_endpoint(ep.clone());
    let backend = HttpBackend::new(config(addr)).unwrap();
    let err = backend.complete(&[Message::User { content: "hi".into() }], &[]).unwrap_err();
    assert!(matches!(err, BackendError::Status { status: 401, .. }), "{err:?}");
    assert_eq!(ep.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn retries_give_up_on_persistent_overload() {
    let ep = Arc::new(Endpoint { fail_first: 100, fail_status: 429, ..Endpoint::default() });
    let (addr, _rt) = spawn_endpoint(ep.clone());
    let backend = HttpBackend::new(config(addr)).unwrap();
    let err = backend.complete(&[Message::User { content: "hi".into() }], &[]).unwrap_err();
    assert!(matches!(err, BackendError::Status { status: 429, .. }), "{err:?}");
    assert_eq!(ep.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn unreachable_endpoint_reports_attempts() {
    // grab a free port, then close it
    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let backend = HttpBackend::new(config(addr)).unwrap();
    let err = backend.complete(&[Message::User { content: "hi".into() }], &[]).unwrap_err();
    assert!(matches!(err, BackendError::Transport { attempts: 3, .. }), "{err:?}");
}
