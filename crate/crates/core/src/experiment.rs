//! Glue shared by the command line and the C ABI: backend specifications,
//! synthetic building sets and split preparation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::backend::{
    Backend, BackendError, OracleBackend, PersistenceBackend, RemoteBackend, RemoteConfig,
    SeasonalNaiveBackend,
};
use crate::codec::PromptTemplate;
use crate::data::{repair_gaps, split_by_months, synth_generate, DataError, DatasetSplit, LoadSeries, MonthSplit, SynthConfig};
use crate::eval::{FitError, LinearArBackend, LinearArModel};

/// Environment variable naming the default service for `remote:` backends.
pub const LM_ENDPOINT_VAR: &str = "LM_ENDPOINT";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("fitting linear AR baseline: {0}")]
    Fit(#[from] FitError),
}

/// Textual backend selector:
/// `oracle | persistence | seasonal:PERIOD | linear-ar:P:LAMBDA | remote:URL`.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Oracle,
    Persistence,
    Seasonal { period: usize },
    LinearAr { order: usize, lambda: f64 },
    /// `None` falls back to the `LM_ENDPOINT` environment variable.
    Remote { endpoint: Option<String> },
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let number = |text: &str, what: &str| -> Result<usize, String> {
            text.parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| format!("{what} in {s:?} must be a positive integer"))
        };
        match kind {
            "oracle" if rest.is_empty() => Ok(Self::Oracle),
            "persistence" if rest.is_empty() => Ok(Self::Persistence),
            "seasonal" if rest.is_empty() => Ok(Self::Seasonal { period: 24 }),
            "seasonal" => Ok(Self::Seasonal {
                period: number(rest, "period")?,
            }),
            "linear-ar" => {
                let (order, lambda) = rest
                    .split_once(':')
                    .ok_or_else(|| format!("expected linear-ar:P:LAMBDA, got {s:?}"))?;
                let lambda: f64 = lambda
                    .parse()
                    .ok()
                    .filter(|l: &f64| l.is_finite() && *l >= 0.0)
                    .ok_or_else(|| format!("lambda in {s:?} must be a non-negative number"))?;
                Ok(Self::LinearAr {
                    order: number(order, "order")?,
                    lambda,
                })
            }
            "remote" => Ok(Self::Remote {
                endpoint: (!rest.is_empty()).then(|| rest.to_string()),
            }),
            _ => Err(format!(
                "unknown backend {s:?} (oracle | persistence | seasonal:PERIOD | linear-ar:P:LAMBDA | remote:URL)"
            )),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Oracle => f.write_str("oracle"),
            Self::Persistence => f.write_str("persistence"),
            Self::Seasonal { period } => write!(f, "seasonal:{period}"),
            Self::LinearAr { order, lambda } => write!(f, "linear-ar:{order}:{lambda}"),
            Self::Remote { endpoint: Some(e) } => write!(f, "remote:{e}"),
            Self::Remote { endpoint: None } => f.write_str("remote"),
        }
    }
}

/// Options for `remote:` backends.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteOptions {
    pub timeout: Duration,
    pub attempts: u32,
    pub backoff: Duration,
    pub max_new_tokens: u32,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        let base = RemoteConfig::new("http://localhost");
        Self {
            timeout: base.timeout,
            attempts: base.attempts,
            backoff: base.backoff,
            max_new_tokens: base.max_new_tokens,
        }
    }
}

impl BackendSpec {
    pub fn is_remote(&self) -> bool {
        matches!(self, Self::Remote { .. })
    }

    /// Connects a remote spec (resolving `LM_ENDPOINT` when no URL is given).
    pub fn remote_client(&self, options: &RemoteOptions) -> Result<Option<RemoteBackend>, BackendError> {
        let Self::Remote { endpoint } = self else {
            return Ok(None);
        };
        let endpoint = match endpoint {
            Some(e) => e.clone(),
            None => std::env::var(LM_ENDPOINT_VAR).map_err(|_| {
                BackendError::InvalidSpec(format!("remote backend without URL and {LM_ENDPOINT_VAR} unset"))
            })?,
        };
        let mut config = RemoteConfig::new(endpoint);
        config.timeout = options.timeout;
        config.attempts = options.attempts;
        config.backoff = options.backoff;
        config.max_new_tokens = options.max_new_tokens;
        RemoteBackend::new(config).map(Some)
    }

    /// Builds the backend used to forecast `target` for a model tied to `source`.
    ///
    /// The oracle reads the target's test set; the linear AR baseline is
    /// fitted on the source's training set.
    pub fn build(
        &self,
        template: &PromptTemplate,
        source: &DatasetSplit,
        target: &DatasetSplit,
        remote: &RemoteOptions,
    ) -> Result<Box<dyn Backend>, ExperimentError> {
        let backend: Box<dyn Backend> = match self {
            Self::Oracle => Box::new(OracleBackend::new(target.test.clone(), template.clone())),
            Self::Persistence => Box::new(PersistenceBackend::new(template.clone())),
            Self::Seasonal { period } => Box::new(SeasonalNaiveBackend::new(*period, template.clone())?),
            Self::LinearAr { order, lambda } => {
                let model = LinearArModel::fit(&source.train.values(), *order, *lambda)?;
                Box::new(LinearArBackend::new(model, template.clone()))
            }
            Self::Remote { .. } => Box::new(self.remote_client(remote)?.expect("remote spec")),
        };
        Ok(backend)
    }
}

/// `A`..`Z`, then `B27`, `B28`, …
pub fn building_name(index: usize) -> String {
    if index < 26 {
        char::from(b'A' + index as u8).to_string()
    } else {
        format!("B{}", index + 1)
    }
}

/// Shape of a synthetic multi-building dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDatasetConfig {
    pub seed: u64,
    pub days: usize,
    pub buildings: usize,
    /// Noise standard deviation as a fraction of each building's base load.
    pub noise_frac: f64,
    /// Weekly amplitude as a fraction of each building's base load.
    pub weekly_frac: f64,
}

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            days: 90,
            buildings: 6,
            noise_frac: 0.03,
            weekly_frac: 0.1,
        }
    }
}

/// Generates `buildings` series with distinct base loads and seeds.
pub fn synth_dataset(config: &SynthDatasetConfig) -> Result<BTreeMap<String, LoadSeries>, DataError> {
    if config.buildings == 0 {
        return Err(DataError::InvalidSynthConfig("need at least one building".into()));
    }
    (0..config.buildings)
        .map(|i| {
            let base = 40.0 + 25.0 * i as f64;
            let building = SynthConfig {
                seed: config.seed.wrapping_add(i as u64),
                days: config.days,
                base_load: base,
                daily_amplitude: 0.3 * base,
                weekly_amplitude: config.weekly_frac * base,
                noise_sd: config.noise_frac * base,
                ..SynthConfig::default()
            };
            let name = building_name(i);
            synth_generate(&building, &name).map(|s| (name, s))
        })
        .collect()
}

/// Repairs small gaps in every series and splits each by calendar month.
pub fn prepare_splits(
    data: &BTreeMap<String, LoadSeries>,
    max_gap_hours: usize,
    months: MonthSplit,
) -> Result<BTreeMap<String, DatasetSplit>, DataError> {
    data.iter()
        .map(|(id, series)| {
            let repaired = repair_gaps(series, max_gap_hours)?;
            Ok((id.clone(), split_by_months(&repaired, months)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_backend_specs() {
        let cases = [
            ("oracle", BackendSpec::Oracle),
            ("persistence", BackendSpec::Persistence),
            ("seasonal", BackendSpec::Seasonal { period: 24 }),
            ("seasonal:168", BackendSpec::Seasonal { period: 168 }),
            ("linear-ar:24:0.5", BackendSpec::LinearAr { order: 24, lambda: 0.5 }),
            ("remote:http://localhost:8000", BackendSpec::Remote {
                endpoint: Some("http://localhost:8000".into()),
            }),
            ("remote:", BackendSpec::Remote { endpoint: None }),
        ];
        for (text, spec) in cases {
            assert_eq!(text.parse::<BackendSpec>().unwrap(), spec, "{text}");
        }
        for bad in ["", "oracle:1", "seasonal:0", "seasonal:x", "linear-ar:3", "linear-ar:0:1", "linear-ar:2:-1", "gpt"] {
            assert!(bad.parse::<BackendSpec>().is_err(), "{bad}");
        }
        assert_eq!(
            "linear-ar:2:0.5".parse::<BackendSpec>().unwrap().to_string(),
            "linear-ar:2:0.5"
        );
    }

    #[test]
    fn synthetic_dataset_shape() {
        let data = synth_dataset(&SynthDatasetConfig::default()).unwrap();
        assert_eq!(data.keys().cloned().collect::<Vec<_>>(), ["A", "B", "C", "D", "E", "F"]);
        assert!(data.values().all(|s| s.len() == 2160));
        let splits = prepare_splits(&data, 3, "1,1,1".parse().unwrap()).unwrap();
        assert_eq!(splits["A"].test.len(), 744);
        assert_eq!(building_name(26), "B27");
    }
}
