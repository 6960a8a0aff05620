//! Error metrics, the three experiment harnesses (per building, zero-shot
//! matrix, horizon sweep), the ridge AR baseline and report rendering.

use thiserror::Error;

use crate::data::DataError;
use crate::rollout::RolloutError;

mod harness;
pub mod linear_ar;
pub mod metrics;
pub mod report;

pub use harness::{
    evaluate_building, evaluate_series, horizon_sweep, zeroshot_matrix, BackendFactory, EvalConfig,
    ModelKey, DEFAULT_HORIZONS, DEFAULT_STRIDE,
};
pub use linear_ar::{FitError, LinearArBackend, LinearArModel};
pub use metrics::{mae, rmse, MetricError, PooledErrors};
pub use report::{
    parse_report_csv, CellMetrics, CellOutcome, EvalReport, EvalRow, ReportFormat,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test series for {building} ({len} records) is too short for a single window")]
    NoWindows { building: String, len: usize },
    #[error("no horizons requested")]
    NoHorizons,
    #[error("zero-shot evaluation needs at least 2 buildings, got {0}")]
    TooFewBuildings(usize),
    #[error("report has no rows")]
    EmptyReport,
    #[error("malformed report: {0}")]
    BadReport(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
