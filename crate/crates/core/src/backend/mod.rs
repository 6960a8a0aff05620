//! Sentence-generation backends.
//!
//! Every backend answers one question: given the history sentences, what is
//! the next sentence? Local backends are deterministic baselines and test
//! doubles; [`RemoteBackend`] talks to a language-model service over HTTP.

use std::time::Duration;

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::codec::{CodecError, Sentence};

mod local;
pub mod remote;

pub use local::{OracleBackend, PersistenceBackend, ScriptedBackend, SeasonalNaiveBackend};
pub use remote::{RemoteBackend, RemoteConfig};
pub(crate) use local::sentence_value;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("no ground truth at {0}")]
    HintOutsideTruth(String),
    #[error("context cannot be parsed: {0}")]
    ContextUnparseable(String),
    #[error("context does not reach {period} hours back from {hint}")]
    PeriodNotCovered { period: usize, hint: String },
    #[error("context has {got} sentences, {needed} required")]
    ContextTooShort { needed: usize, got: usize },
    #[error("scripted backend has no sentences left")]
    ScriptExhausted,
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    TransportError { attempts: u32, message: String },
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("service returned status {status}: {message}")]
    Service { status: u16, message: String },
    #[error("invalid backend specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// History sentences (oldest first) and the timestamp of the step to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationContext {
    sentences: Vec<Sentence>,
    next_timestamp_hint: NaiveDateTime,
}

impl GenerationContext {
    pub fn new(sentences: Vec<Sentence>, next_timestamp_hint: NaiveDateTime) -> Result<Self, BackendError> {
        if sentences.is_empty() {
            return Err(BackendError::ContextTooShort { needed: 1, got: 0 });
        }
        Ok(Self {
            sentences,
            next_timestamp_hint,
        })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn next_timestamp_hint(&self) -> NaiveDateTime {
        self.next_timestamp_hint
    }

    /// Sentences joined by newlines, as sent to a language model.
    pub fn joined(&self) -> String {
        self.sentences
            .iter()
            .map(Sentence::as_str)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendAnswer {
    pub sentence: Sentence,
    pub latency: Duration,
    /// 1-based number of tries the backend used internally.
    pub attempt: u32,
}

impl BackendAnswer {
    pub(crate) fn immediate(sentence: Sentence) -> Self {
        Self {
            sentence,
            latency: Duration::ZERO,
            attempt: 1,
        }
    }
}

pub trait Backend {
    fn next_sentence(&self, ctx: &GenerationContext) -> Result<BackendAnswer, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn next_sentence(&self, ctx: &GenerationContext) -> Result<BackendAnswer, BackendError> {
        (**self).next_sentence(ctx)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn next_sentence(&self, ctx: &GenerationContext) -> Result<BackendAnswer, BackendError> {
        (**self).next_sentence(ctx)
    }
}
