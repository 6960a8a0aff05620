//! In-process stand-in for the language-model service.

#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use chrono::Duration;
use loadprompt::PromptTemplate;
use serde_json::{json, Value};
use tiny_http::{Header, Method, Response, Server};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behavior {
    /// Repeats the last context value one hour later.
    Persistence,
    /// Answers 503 to the first `n` generate calls, then behaves like `Persistence`.
    FailFirst(usize),
    /// 200 with the sentence under the wrong key.
    MissingField,
    /// 200 with text that carries no number.
    Babble,
    /// Persistence, except that the listed 0-based generate calls get text with no number.
    MalformedAt(&'static [usize]),
}

pub struct StubService {
    pub url: String,
    generate_calls: Arc<AtomicUsize>,
    server: Arc<Server>,
    worker: Option<JoinHandle<()>>,
}

impl StubService {
    pub fn start(behavior: Behavior) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind stub"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let calls = Arc::new(AtomicUsize::new(0));
        let worker = {
            let server = Arc::clone(&server);
            let calls = Arc::clone(&calls);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    handle(request, behavior, &calls);
                }
            })
        };
        Self {
            url: format!("http://127.0.0.1:{port}"),
            generate_calls: calls,
            server,
            worker: Some(worker),
        }
    }

    pub fn generate_calls(&self) -> usize {
        self.generate_calls.load(Ordering::SeqCst)
    }
}

impl Drop for StubService {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn reply(request: tiny_http::Request, status: u16, body: Value) {
    let header = Header::from_bytes("Content-Type", "application/json").unwrap();
    let response = Response::from_string(body.to_string())
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

/// Next-hour sentence carrying the last context value.
pub fn persist_next(context: &str) -> Option<String> {
    let template = PromptTemplate::default();
    let last = context.lines().last()?;
    let (ts, value) = template.parse_strict(last).ok()?;
    Some(template.render_at(ts + Duration::hours(1), value).to_string())
}

fn handle(mut request: tiny_http::Request, behavior: Behavior, calls: &AtomicUsize) {
    match (request.method(), request.url()) {
        (Method::Get, "/health") => reply(request, 200, json!({"status": "ok", "model": "stub-persistence"})),
        (Method::Post, "/generate") => {
            let mut body = String::new();
            let _ = request.as_reader().read_to_string(&mut body);
            let context = match serde_json::from_str::<Value>(&body) {
                Ok(v) => match v.get("context").and_then(Value::as_str) {
                    Some(c) => c.to_string(),
                    None => return reply(request, 400, json!({"error": "missing `context`"})),
                },
                Err(e) => return reply(request, 400, json!({"error": format!("malformed body: {e}")})),
            };
            let call = calls.fetch_add(1, Ordering::SeqCst);
            if matches!(behavior, Behavior::FailFirst(n) if call < n) {
                return reply(request, 503, json!({"error": "warming up"}));
            }
            match behavior {
                Behavior::MissingField => reply(request, 200, json!({"text": "The electric load is 1.0."})),
                Behavior::MalformedAt(calls) if calls.contains(&call) => {
                    reply(request, 200, json!({"generated": "### ###"}))
                }
                Behavior::Babble => reply(request, 200, json!({"generated": "I cannot tell the load."})),
                _ => match persist_next(&context) {
                    Some(sentence) => reply(request, 200, json!({"generated": sentence})),
                    None => reply(request, 400, json!({"error": "context is not in the expected template"})),
                },
            }
        }
        _ => reply(request, 404, json!({"error": "not found"})),
    }
}
