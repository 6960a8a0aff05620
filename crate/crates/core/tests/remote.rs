mod common;

use std::time::Duration;

use common::{Behavior, StubService};
use loadprompt::backend::remote::contract;
use loadprompt::backend::{PersistenceBackend, RemoteBackend, RemoteConfig};
use loadprompt::data::parse_timestamp;
use loadprompt::rollout::{FaultKind, Recovery};
use loadprompt::{forecast, Backend, BackendError, GenerationContext, LoadSeries, PromptTemplate, RolloutConfig, Sentence};

fn client(url: &str) -> RemoteBackend {
    let mut cfg = RemoteConfig::new(url);
    cfg.backoff = Duration::from_millis(1);
    cfg.timeout = Duration::from_secs(5);
    RemoteBackend::new(cfg).unwrap()
}

fn context() -> GenerationContext {
    let t = PromptTemplate::default();
    let start = parse_timestamp("2019-12-01 00:00").unwrap();
    let sentences = (0..3)
        .map(|h| t.render_at(start + chrono::Duration::hours(h), 10.0 + h as f64))
        .collect();
    GenerationContext::new(sentences, start + chrono::Duration::hours(3)).unwrap()
}

#[test]
fn healthy_service_answers_on_first_attempt() {
    let stub = StubService::start(Behavior::Persistence);
    let answer = client(&stub.url).next_sentence(&context()).unwrap();
    assert_eq!(answer.attempt, 1);
    assert_eq!(answer.sentence.as_str(), "The electric load at 2019-12-01 03:00 is 12.0.");
    assert_eq!(client(&stub.url).health().unwrap().model, "stub-persistence");
}

#[test]
fn missing_generated_field_is_bad_response() {
    let stub = StubService::start(Behavior::MissingField);
    match client(&stub.url).next_sentence(&context()) {
        Err(BackendError::BadResponse(msg)) => assert!(msg.contains("generated"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn server_errors_are_retried() {
    let stub = StubService::start(Behavior::FailFirst(2));
    let answer = client(&stub.url).next_sentence(&context()).unwrap();
    assert_eq!(answer.attempt, 3);
    assert_eq!(stub.generate_calls(), 3);

    let stub = StubService::start(Behavior::FailFirst(10));
    match client(&stub.url).next_sentence(&context()) {
        Err(BackendError::Service { status: 503, message }) => assert_eq!(message, "warming up"),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(stub.generate_calls(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = StubService::start(Behavior::Persistence);
    let ctx = GenerationContext::new(
        vec![Sentence::new("not a template sentence").unwrap()],
        parse_timestamp("2019-12-01 00:00").unwrap(),
    )
    .unwrap();
    match client(&stub.url).next_sentence(&ctx) {
        Err(BackendError::Service { status: 400, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(stub.generate_calls(), 1);
}

#[test]
fn identical_requests_are_idempotent() {
    let stub = StubService::start(Behavior::Persistence);
    let backend = client(&stub.url);
    let ctx = context();
    let a = backend.next_sentence(&ctx).unwrap().sentence;
    let b = backend.next_sentence(&ctx).unwrap().sentence;
    assert_eq!(a, b);
    assert_eq!(ctx, context(), "context untouched");
}

#[test]
fn concurrent_requests_are_isolated() {
    let stub = StubService::start(Behavior::Persistence);
    let backend = client(&stub.url);
    let t = PromptTemplate::default();
    let start = parse_timestamp("2019-12-01 00:00").unwrap();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let backend = &backend;
                let t = &t;
                scope.spawn(move || {
                    let ctx = GenerationContext::new(vec![t.render_at(start, i as f64)], start + chrono::Duration::hours(1))
                        .unwrap();
                    let (_, v) = t.parse_strict(backend.next_sentence(&ctx).unwrap().sentence.as_str()).unwrap();
                    (i as f64, v)
                })
            })
            .collect();
        for h in handles {
            let (sent, got) = h.join().unwrap();
            assert_eq!(sent, got);
        }
    });
}

#[test]
fn contract_suite_passes_against_stub() {
    let stub = StubService::start(Behavior::Persistence);
    let report = contract::run(&stub.url, Duration::from_secs(5));
    assert!(report.all_passed(), "{report:#?}");
    assert_eq!(report.checks.len(), 5);
}

#[test]
fn contract_suite_flags_schema_violations() {
    let stub = StubService::start(Behavior::MissingField);
    let report = contract::run(&stub.url, Duration::from_secs(5));
    assert!(!report.all_passed());
    let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    assert!(failed.contains(&"generate"), "{failed:?}");
    assert!(!failed.contains(&"health"));
    assert!(!failed.contains(&"missing_context_is_400"));
}

fn history(len: usize) -> LoadSeries {
    let values: Vec<f64> = (0..len).map(|h| 50.0 + (h % 7) as f64 * 1.5).collect();
    LoadSeries::from_values("R", parse_timestamp("2019-12-01 00:00").unwrap(), &values).unwrap()
}

#[test]
fn remote_rollout_matches_local_persistence() {
    let stub = StubService::start(Behavior::Persistence);
    let template = PromptTemplate::default();
    let config = RolloutConfig::default();
    let series = history(30);
    let remote = forecast("R", series.records(), &client(&stub.url), &template, &config).unwrap();
    let local = forecast("R", series.records(), &PersistenceBackend::default(), &template, &config).unwrap();
    assert_eq!(remote.predictions, local.predictions);
    assert_eq!(remote.transcript, local.transcript);
    assert!(remote.faults.is_empty());
    assert_eq!(stub.generate_calls(), 24);
}

#[test]
fn babbling_service_falls_back_to_persistence() {
    let stub = StubService::start(Behavior::Babble);
    let template = PromptTemplate::default();
    let config = RolloutConfig {
        m: 4,
        ..RolloutConfig::default()
    };
    let series = history(30);
    let last = *series.values().last().unwrap();
    let result = forecast("R", series.records(), &client(&stub.url), &template, &config).unwrap();
    assert_eq!(result.predictions, vec![last; 4]);
    assert!(result.faults.iter().all(|f| f.kind == FaultKind::Unparseable));
    assert_eq!(
        result.faults.iter().filter(|f| f.recovery == Recovery::PersistLast).count(),
        4
    );
}
