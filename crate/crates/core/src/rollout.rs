//! Autoregressive multi-step forecasting through a sentence backend.
//!
//! Each step asks the backend for the next sentence, extracts the value,
//! re-renders it canonically at the scheduled timestamp and appends it to the
//! context. Generated timestamps are never trusted; the schedule is.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, GenerationContext};
use crate::codec::{parse_lenient, PromptTemplate, Sentence};
use crate::data::{format_timestamp, LoadRecord};

pub const DEFAULT_N: usize = 30;
pub const DEFAULT_M: usize = 24;
pub const DEFAULT_RETRY_LIMIT: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RolloutError {
    #[error("invalid rollout configuration: {0}")]
    InvalidConfig(String),
    #[error("history has {got} records, expected {expected}")]
    HistoryLength { expected: usize, got: usize },
    #[error("history is not hourly-continuous at {0}")]
    HistoryNotHourly(String),
    #[error("no horizons requested")]
    EmptyHorizons,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Keep the most recent `n` sentences.
    #[default]
    Sliding,
    /// Keep every sentence, history plus all generated steps.
    Growing,
}

impl std::str::FromStr for ContextMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sliding" => Ok(Self::Sliding),
            "growing" => Ok(Self::Growing),
            other => Err(format!("unknown context mode {other:?} (sliding | growing)")),
        }
    }
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sliding => "sliding",
            Self::Growing => "growing",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Repeat the most recent value in the context.
    #[default]
    PersistLast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutConfig {
    pub n: usize,
    pub m: usize,
    pub context_mode: ContextMode,
    /// Backend calls allowed per step, including the first.
    pub retry_limit: u32,
    pub fallback: Fallback,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_N,
            m: DEFAULT_M,
            context_mode: ContextMode::Sliding,
            retry_limit: DEFAULT_RETRY_LIMIT,
            fallback: Fallback::PersistLast,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), RolloutError> {
        if self.n == 0 || self.m == 0 {
            return Err(RolloutError::InvalidConfig(format!(
                "n={} and m={} must be at least 1",
                self.n, self.m
            )));
        }
        if self.retry_limit == 0 {
            return Err(RolloutError::InvalidConfig("retry_limit must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// The backend returned an error instead of a sentence.
    BackendError,
    /// Neither the template nor the numeric scan recovered a value.
    Unparseable,
    /// The sentence did not match the template; the value came from the numeric scan.
    TemplateMismatch,
    /// The sentence carried a timestamp other than the scheduled one.
    TimestampMismatch,
    /// The recovered value was negative.
    NegativeValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    Retry,
    LenientParse,
    ForcedTimestamp,
    PersistLast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    /// 1-based forecast step.
    pub step: usize,
    pub kind: FaultKind,
    pub recovery: Recovery,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub building_id: String,
    /// Timestamp of the first predicted step.
    #[serde(with = "crate::data::timestamp_serde")]
    pub start_timestamp: NaiveDateTime,
    pub predictions: Vec<f64>,
    /// Canonical sentence accepted at each step.
    pub transcript: Vec<Sentence>,
    pub faults: Vec<Fault>,
}

impl ForecastResult {
    /// The first `m` steps of this forecast.
    pub fn prefix(&self, m: usize) -> ForecastResult {
        let m = m.min(self.predictions.len());
        ForecastResult {
            building_id: self.building_id.clone(),
            start_timestamp: self.start_timestamp,
            predictions: self.predictions[..m].to_vec(),
            transcript: self.transcript[..m].to_vec(),
            faults: self.faults.iter().filter(|f| f.step <= m).cloned().collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forecast result serializes")
    }
}

/// Outcome of interpreting one backend sentence.
struct Interpreted {
    value: f64,
    notes: Vec<(FaultKind, Recovery, String)>,
}

fn interpret(
    template: &PromptTemplate,
    raw: &Sentence,
    hint: NaiveDateTime,
) -> Result<Interpreted, (FaultKind, String)> {
    let mut notes = Vec::new();
    let value = match template.parse_strict(raw.as_str()) {
        Ok((ts, value)) => {
            if ts != hint {
                notes.push((
                    FaultKind::TimestampMismatch,
                    Recovery::ForcedTimestamp,
                    format!("generated {} for {}", format_timestamp(&ts), format_timestamp(&hint)),
                ));
            }
            value
        }
        Err(strict) => match parse_lenient(raw.as_str()) {
            Ok(value) => {
                notes.push((FaultKind::TemplateMismatch, Recovery::LenientParse, strict.to_string()));
                value
            }
            Err(e) => return Err((FaultKind::Unparseable, e.to_string())),
        },
    };
    if value < 0.0 {
        return Err((FaultKind::NegativeValue, format!("{value} in {raw:?}")));
    }
    Ok(Interpreted { value, notes })
}

fn validate_history(history: &[LoadRecord], config: &RolloutConfig) -> Result<(), RolloutError> {
    config.validate()?;
    if history.len() != config.n {
        return Err(RolloutError::HistoryLength {
            expected: config.n,
            got: history.len(),
        });
    }
    if let Some(w) = history
        .windows(2)
        .find(|w| w[1].timestamp() - w[0].timestamp() != Duration::hours(1))
    {
        return Err(RolloutError::HistoryNotHourly(format_timestamp(&w[1].timestamp())));
    }
    Ok(())
}

/// Forecasts `config.m` hourly steps after `history` (exactly `config.n` records).
///
/// Always returns a full-length result: steps the backend cannot answer fall
/// back to the last known value and are listed in `faults`.
pub fn forecast<B: Backend + ?Sized>(
    building_id: &str,
    history: &[LoadRecord],
    backend: &B,
    template: &PromptTemplate,
    config: &RolloutConfig,
) -> Result<ForecastResult, RolloutError> {
    validate_history(history, config)?;

    let mut context: VecDeque<Sentence> = history.iter().map(|r| template.render(r)).collect();
    let mut last_value = template.round_value(history[history.len() - 1].consumption());
    let mut next = history[history.len() - 1].timestamp() + Duration::hours(1);
    let start_timestamp = next;

    let mut predictions = Vec::with_capacity(config.m);
    let mut transcript = Vec::with_capacity(config.m);
    let mut faults = Vec::new();

    for step in 1..=config.m {
        let ctx = GenerationContext::new(context.iter().cloned().collect(), next)
            .expect("context holds at least n >= 1 sentences");
        let mut failures: Vec<(FaultKind, String)> = Vec::new();
        let mut accepted = None;
        for _ in 0..config.retry_limit {
            let outcome = backend
                .next_sentence(&ctx)
                .map_err(|e| (FaultKind::BackendError, e.to_string()))
                .and_then(|answer| interpret(template, &answer.sentence, next));
            match outcome {
                Ok(found) => {
                    accepted = Some(found);
                    break;
                }
                Err(failure) => failures.push(failure),
            }
        }

        let failed_attempts = failures.len();
        for (i, (kind, detail)) in failures.into_iter().enumerate() {
            let last_try = i + 1 == failed_attempts && accepted.is_none();
            let recovery = if last_try {
                match config.fallback {
                    Fallback::PersistLast => Recovery::PersistLast,
                }
            } else {
                Recovery::Retry
            };
            faults.push(Fault {
                step,
                kind,
                recovery,
                detail,
            });
        }

        let value = match accepted {
            Some(found) => {
                faults.extend(found.notes.into_iter().map(|(kind, recovery, detail)| Fault {
                    step,
                    kind,
                    recovery,
                    detail,
                }));
                template.round_value(found.value)
            }
            None => last_value,
        };

        let sentence = template.render_at(next, value);
        context.push_back(sentence.clone());
        if config.context_mode == ContextMode::Sliding && context.len() > config.n {
            context.pop_front();
        }
        predictions.push(value);
        transcript.push(sentence);
        last_value = value;
        next += Duration::hours(1);
    }

    Ok(ForecastResult {
        building_id: building_id.to_string(),
        start_timestamp,
        predictions,
        transcript,
        faults,
    })
}

/// One rollout to the largest horizon; every requested horizon gets its prefix.
pub fn forecast_horizons<B: Backend + ?Sized>(
    building_id: &str,
    history: &[LoadRecord],
    backend: &B,
    template: &PromptTemplate,
    config: &RolloutConfig,
    horizons: &BTreeSet<usize>,
) -> Result<BTreeMap<usize, ForecastResult>, RolloutError> {
    let max = *horizons.last().ok_or(RolloutError::EmptyHorizons)?;
    if horizons.contains(&0) {
        return Err(RolloutError::InvalidConfig("horizons must be at least 1".into()));
    }
    let full = forecast(
        building_id,
        history,
        backend,
        template,
        &RolloutConfig { m: max, ..*config },
    )?;
    Ok(horizons.iter().map(|&m| (m, full.prefix(m))).collect())
}
