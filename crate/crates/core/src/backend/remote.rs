//! HTTP client for the language-model service.
//!
//! Wire protocol (JSON over HTTP):
//!
//! ```text
//! POST {endpoint}/generate   {"context": "<sentences joined by \n>", "max_new_tokens": 32}
//!   200                      {"generated": "<one sentence>"}
//!   4xx / 5xx                {"error": "<message>"}
//! GET  {endpoint}/health
//!   200                      {"status": "ok", "model": "<identifier>"}
//! ```

use std::io;
use std::time::{Duration, Instant};

use super::{Backend, BackendAnswer, BackendError, GenerationContext};
use crate::codec::Sentence;

pub const DEFAULT_MAX_NEW_TOKENS: u32 = 32;
pub const DEFAULT_ATTEMPTS: u32 = 3;
pub const DEFAULT_BACKOFF: Duration = Duration::from_millis(250);
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Request and response bodies of the service protocol.
pub mod wire {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct GenerateRequest {
        pub context: String,
        pub max_new_tokens: u32,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct GenerateResponse {
        pub generated: String,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ErrorResponse {
        pub error: String,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct HealthResponse {
        pub status: String,
        pub model: String,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout: Duration,
    /// Total tries per request, including the first.
    pub attempts: u32,
    /// Delay before the second try; doubles for each further try.
    pub backoff: Duration,
    pub max_new_tokens: u32,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            timeout: DEFAULT_TIMEOUT,
            attempts: DEFAULT_ATTEMPTS,
            backoff: DEFAULT_BACKOFF,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }
}

/// Client for a remote generation service. Safe to share across threads;
/// each call is an independent request.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

enum Failure {
    Retryable(BackendError),
    Fatal(BackendError),
}

fn is_timeout(err: &ureq::Transport) -> bool {
    let mut source = std::error::Error::source(err);
    while let Some(e) = source {
        if let Some(io_err) = e.downcast_ref::<io::Error>() {
            if matches!(io_err.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        source = e.source();
    }
    err.to_string().contains("timed out")
}

fn classify(err: ureq::Error, attempt: u32) -> Failure {
    match err {
        ureq::Error::Status(status, response) => {
            let body = response.into_string().unwrap_or_default();
            let message = serde_json::from_str::<wire::ErrorResponse>(&body)
                .map(|e| e.error)
                .unwrap_or(body);
            let e = BackendError::Service { status, message };
            if status >= 500 {
                Failure::Retryable(e)
            } else {
                Failure::Fatal(e)
            }
        }
        ureq::Error::Transport(t) if is_timeout(&t) => {
            Failure::Retryable(BackendError::Timeout { attempts: attempt })
        }
        ureq::Error::Transport(t) => Failure::Retryable(BackendError::TransportError {
            attempts: attempt,
            message: t.to_string(),
        }),
    }
}

fn first_line(generated: &str) -> Result<Sentence, BackendError> {
    let line = generated
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| BackendError::BadResponse("empty `generated` text".into()))?;
    Ok(Sentence::new(line)?)
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        if config.attempts == 0 {
            return Err(BackendError::InvalidSpec("attempts must be at least 1".into()));
        }
        if !(config.endpoint.starts_with("http://") || config.endpoint.starts_with("https://")) {
            return Err(BackendError::InvalidSpec(format!(
                "endpoint {:?} is not an http(s) URL",
                config.endpoint
            )));
        }
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint, path)
    }

    fn with_retries<T>(&self, mut call: impl FnMut(u32) -> Result<T, Failure>) -> Result<(T, u32), BackendError> {
        let mut delay = self.config.backoff;
        let mut attempt = 1;
        loop {
            match call(attempt) {
                Ok(v) => return Ok((v, attempt)),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) if attempt >= self.config.attempts => return Err(e),
                Err(Failure::Retryable(_)) => {
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                    attempt += 1;
                }
            }
        }
    }

    /// Queries `GET /health`.
    pub fn health(&self) -> Result<wire::HealthResponse, BackendError> {
        let (health, _) = self.with_retries(|attempt| {
            let response = self
                .agent
                .get(&self.url("/health"))
                .call()
                .map_err(|e| classify(e, attempt))?;
            response
                .into_json::<wire::HealthResponse>()
                .map_err(|e| Failure::Fatal(BackendError::BadResponse(e.to_string())))
        })?;
        if health.status != "ok" {
            return Err(BackendError::BadResponse(format!(
                "health status is {:?}",
                health.status
            )));
        }
        Ok(health)
    }
}

impl Backend for RemoteBackend {
    fn next_sentence(&self, ctx: &GenerationContext) -> Result<BackendAnswer, BackendError> {
        let request = wire::GenerateRequest {
            context: ctx.joined(),
            max_new_tokens: self.config.max_new_tokens,
        };
        let started = Instant::now();
        let (body, attempt) = self.with_retries(|attempt| {
            let response = self
                .agent
                .post(&self.url("/generate"))
                .send_json(&request)
                .map_err(|e| classify(e, attempt))?;
            response
                .into_string()
                .map_err(|e| Failure::Retryable(BackendError::TransportError {
                    attempts: attempt,
                    message: e.to_string(),
                }))
        })?;
        let parsed: wire::GenerateResponse = serde_json::from_str(&body)
            .map_err(|e| BackendError::BadResponse(format!("{e}: {body}")))?;
        Ok(BackendAnswer {
            sentence: first_line(&parsed.generated)?,
            latency: started.elapsed(),
            attempt,
        })
    }
}

/// Protocol conformance checks runnable against any service endpoint.
pub mod contract {
    use std::time::Duration;

    use serde::Serialize;
    use serde_json::Value;

    use crate::codec::PromptTemplate;
    use crate::data::parse_timestamp;

    #[derive(Debug, Clone, PartialEq, Eq, Serialize)]
    pub struct ContractCheck {
        pub name: &'static str,
        pub passed: bool,
        pub detail: String,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize)]
    pub struct ContractReport {
        pub endpoint: String,
        pub checks: Vec<ContractCheck>,
    }

    impl ContractReport {
        pub fn all_passed(&self) -> bool {
            self.checks.iter().all(|c| c.passed)
        }
    }

    /// Thirty hourly sentences in the default template.
    pub fn sample_context() -> String {
        let template = PromptTemplate::default();
        let start = parse_timestamp("2019-12-01 00:00").expect("valid timestamp");
        (0..30)
            .map(|h| {
                let value = 100.0 + 20.0 * ((h % 24) as f64 / 24.0 * std::f64::consts::TAU).sin();
                template
                    .render_at(start + chrono::Duration::hours(h), value)
                    .to_string()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn status_and_json(result: Result<ureq::Response, ureq::Error>) -> Result<(u16, Value), String> {
        let response = match result {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(e) => return Err(e.to_string()),
        };
        let status = response.status();
        let body = response.into_string().map_err(|e| e.to_string())?;
        let json = serde_json::from_str(&body).map_err(|e| format!("status {status}, non-JSON body {body:?}: {e}"))?;
        Ok((status, json))
    }

    fn check(name: &'static str, outcome: Result<(), String>) -> ContractCheck {
        ContractCheck {
            name,
            passed: outcome.is_ok(),
            detail: outcome.err().unwrap_or_default(),
        }
    }

    fn expect_error_400(result: Result<ureq::Response, ureq::Error>) -> Result<(), String> {
        let (status, json) = status_and_json(result)?;
        if status != 400 {
            return Err(format!("expected status 400, got {status}"));
        }
        match json.get("error") {
            Some(Value::String(_)) => Ok(()),
            _ => Err(format!("missing string `error` field in {json}")),
        }
    }

    pub fn run(endpoint: &str, timeout: Duration) -> ContractReport {
        let endpoint = endpoint.trim_end_matches('/').to_string();
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let generate = format!("{endpoint}/generate");
        let valid = serde_json::json!({"context": sample_context(), "max_new_tokens": 32});
        let mut checks = Vec::new();

        checks.push(check(
            "health",
            status_and_json(agent.get(&format!("{endpoint}/health")).call()).and_then(|(status, json)| {
                if status != 200 {
                    return Err(format!("expected status 200, got {status}"));
                }
                if json.get("status") != Some(&Value::String("ok".into())) {
                    return Err(format!("`status` is not \"ok\" in {json}"));
                }
                match json.get("model") {
                    Some(Value::String(_)) => Ok(()),
                    _ => Err(format!("missing string `model` field in {json}")),
                }
            }),
        ));

        let mut first_generated = None;
        checks.push(check(
            "generate",
            status_and_json(agent.post(&generate).send_json(&valid)).and_then(|(status, json)| {
                if status != 200 {
                    return Err(format!("expected status 200, got {status}: {json}"));
                }
                match json.get("generated") {
                    Some(Value::String(s)) if !s.trim().is_empty() => {
                        first_generated = Some(s.clone());
                        Ok(())
                    }
                    _ => Err(format!("missing non-empty string `generated` field in {json}")),
                }
            }),
        ));

        checks.push(check(
            "generate_deterministic",
            status_and_json(agent.post(&generate).send_json(&valid)).and_then(|(_, json)| {
                let again = json.get("generated").and_then(Value::as_str).map(str::to_string);
                match (&first_generated, again) {
                    (Some(a), Some(b)) if *a == b => Ok(()),
                    (a, b) => Err(format!("responses differ: {a:?} vs {b:?}")),
                }
            }),
        ));

        checks.push(check(
            "missing_context_is_400",
            expect_error_400(
                agent
                    .post(&generate)
                    .send_json(serde_json::json!({"max_new_tokens": 32})),
            ),
        ));

        checks.push(check(
            "malformed_body_is_400",
            expect_error_400(
                agent
                    .post(&generate)
                    .set("Content-Type", "application/json")
                    .send_string("{not json"),
            ),
        ));

        ContractReport { endpoint, checks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_configuration() {
        assert!(matches!(
            RemoteBackend::new(RemoteConfig::new("localhost:8000")),
            Err(BackendError::InvalidSpec(_))
        ));
        let mut cfg = RemoteConfig::new("http://localhost:8000/");
        assert_eq!(cfg.endpoint, "http://localhost:8000");
        cfg.attempts = 0;
        assert!(RemoteBackend::new(cfg).is_err());
    }

    #[test]
    fn generated_text_keeps_first_line() {
        assert_eq!(first_line("\n  A b.\nC d.").unwrap().as_str(), "A b.");
        assert!(matches!(first_line(" \n "), Err(BackendError::BadResponse(_))));
    }

    #[test]
    fn dead_endpoint_is_transport_error_after_retries() {
        // Bind then drop to get a port with nothing listening.
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut cfg = RemoteConfig::new(format!("http://127.0.0.1:{port}"));
        cfg.backoff = Duration::from_millis(1);
        let backend = RemoteBackend::new(cfg).unwrap();
        let ctx = GenerationContext::new(
            vec![Sentence::new("x").unwrap()],
            crate::data::parse_timestamp("2019-12-01 00:00").unwrap(),
        )
        .unwrap();
        match backend.next_sentence(&ctx) {
            Err(BackendError::TransportError { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
