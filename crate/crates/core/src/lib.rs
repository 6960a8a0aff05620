//! Energy load forecasting with sentence-generation models.
//!
//! Hourly load records are rendered as template sentences, a backend
//! generates the next sentence, and the value it carries is fed back as
//! context until the forecast horizon is covered. Evaluation harnesses score
//! the rollouts per building, across buildings (zero-shot) and across
//! horizons.

pub mod backend;
pub mod cli;
pub mod codec;
pub mod data;
pub mod eval;
pub mod experiment;
pub mod export;
pub mod rollout;

pub use backend::{Backend, BackendAnswer, BackendError, GenerationContext};
pub use codec::{parse_lenient, CodecError, PromptTemplate, Sentence};
pub use data::{DataError, DatasetSplit, LoadRecord, LoadSeries, MonthSplit, WindowPair, WindowSpec};
pub use rollout::{forecast, forecast_horizons, ContextMode, ForecastResult, RolloutConfig};
