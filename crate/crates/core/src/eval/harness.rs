use std::collections::{BTreeMap, BTreeSet};

use crate::backend::Backend;
use crate::codec::PromptTemplate;
use crate::data::{make_windows, DatasetSplit, LoadSeries, WindowSpec};
use crate::rollout::{forecast_horizons, RolloutConfig};

use super::metrics::PooledErrors;
use super::report::{CellMetrics, CellOutcome, EvalReport, EvalRow};
use super::EvalError;

pub const DEFAULT_STRIDE: usize = 24;
pub const DEFAULT_HORIZONS: [usize; 4] = [1, 4, 12, 24];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub rollout: RolloutConfig,
    /// Hours between consecutive test windows.
    pub stride: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            rollout: RolloutConfig::default(),
            stride: DEFAULT_STRIDE,
        }
    }
}

impl EvalConfig {
    pub fn notes(&self, template: &PromptTemplate) -> Vec<String> {
        vec![
            "aggregation: pooled over every (window, step) residual".to_string(),
            format!("truth: rounded to {} decimal(s), as in the sentences", template.decimals()),
            format!(
                "windows: n={}, stride={}, context={}",
                self.rollout.n, self.stride, self.rollout.context_mode
            ),
        ]
    }
}

/// Pooled metrics per horizon over every test window of `test`.
///
/// Each window is rolled out once to the largest horizon; shorter horizons
/// are scored on prefixes of that rollout.
pub fn evaluate_series<B: Backend + ?Sized>(
    test: &LoadSeries,
    backend: &B,
    template: &PromptTemplate,
    config: &EvalConfig,
    horizons: &BTreeSet<usize>,
) -> Result<BTreeMap<usize, CellMetrics>, EvalError> {
    let max_m = *horizons.last().ok_or(EvalError::NoHorizons)?;
    test.check_hourly()?;
    let spec = WindowSpec::new(config.rollout.n, max_m, config.stride)?;
    let windows = make_windows(test, spec);
    if windows.is_empty() {
        return Err(EvalError::NoWindows {
            building: test.building_id().to_string(),
            len: test.len(),
        });
    }

    let mut pooled: BTreeMap<usize, (PooledErrors, usize)> =
        horizons.iter().map(|&m| (m, Default::default())).collect();
    for w in &windows {
        let results = forecast_horizons(
            test.building_id(),
            w.observation,
            backend,
            template,
            &config.rollout,
            horizons,
        )?;
        // Sentences carry values at the template's precision, so the truth
        // is compared at that precision too.
        let truth: Vec<f64> = w.target_values().into_iter().map(|v| template.round_value(v)).collect();
        for (m, result) in results {
            let (errors, faults) = pooled.get_mut(&m).expect("horizon registered");
            errors.add(&result.predictions, &truth[..m])?;
            *faults += result.faults.len();
        }
    }

    Ok(pooled
        .into_iter()
        .map(|(m, (errors, faults))| {
            let (rmse, mae) = errors.finish().expect("at least one window");
            (
                m,
                CellMetrics {
                    rmse,
                    mae,
                    windows: windows.len(),
                    faults,
                },
            )
        })
        .collect())
}

/// One report row for a building's test set at horizon `config.rollout.m`.
pub fn evaluate_building<B: Backend + ?Sized>(
    model: &str,
    split: &DatasetSplit,
    backend: &B,
    template: &PromptTemplate,
    config: &EvalConfig,
) -> Result<EvalRow, EvalError> {
    let m = config.rollout.m;
    let mut metrics = evaluate_series(&split.test, backend, template, config, &BTreeSet::from([m]))?;
    let building = split.test.building_id().to_string();
    Ok(EvalRow {
        model: model.to_string(),
        source_building: building.clone(),
        target_building: building,
        horizon: m,
        outcome: CellOutcome::Ok(metrics.remove(&m).expect("requested horizon")),
    })
}

/// One row per horizon, all computed from the same rollouts.
pub fn horizon_sweep<B: Backend + ?Sized>(
    model: &str,
    split: &DatasetSplit,
    backend: &B,
    template: &PromptTemplate,
    config: &EvalConfig,
    horizons: &BTreeSet<usize>,
) -> Result<EvalReport, EvalError> {
    let metrics = evaluate_series(&split.test, backend, template, config, horizons)?;
    let building = split.test.building_id();
    let rows = metrics
        .into_iter()
        .map(|(m, cell)| EvalRow {
            model: model.to_string(),
            source_building: building.to_string(),
            target_building: building.to_string(),
            horizon: m,
            outcome: CellOutcome::Ok(cell),
        })
        .collect();
    Ok(EvalReport::new(rows, config.notes(template)))
}

/// Builds the backend a model fine-tuned on some source building uses to
/// forecast a target building.
pub trait BackendFactory {
    fn build(&self, target: &DatasetSplit) -> Result<Box<dyn Backend>, String>;
}

impl<F> BackendFactory for F
where
    F: Fn(&DatasetSplit) -> Result<Box<dyn Backend>, String>,
{
    fn build(&self, target: &DatasetSplit) -> Result<Box<dyn Backend>, String> {
        self(target)
    }
}

/// Key of a zero-shot backend: `(model, source building)`.
pub type ModelKey = (String, String);

/// Evaluates every `(model, source)` backend on every building except its source.
///
/// A cell that fails to build or evaluate becomes a failed row; the rest of
/// the matrix still runs.
pub fn zeroshot_matrix(
    splits: &BTreeMap<String, DatasetSplit>,
    backends: &BTreeMap<ModelKey, Box<dyn BackendFactory>>,
    template: &PromptTemplate,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if splits.len() < 2 {
        return Err(EvalError::TooFewBuildings(splits.len()));
    }
    let m = config.rollout.m;
    let mut rows = Vec::new();
    for ((model, source), factory) in backends {
        for (target, split) in splits.iter().filter(|(t, _)| *t != source) {
            let outcome = factory
                .build(split)
                .and_then(|backend| {
                    evaluate_series(&split.test, backend.as_ref(), template, config, &BTreeSet::from([m]))
                        .map_err(|e| e.to_string())
                })
                .map_or_else(CellOutcome::Failed, |mut cells| {
                    CellOutcome::Ok(cells.remove(&m).expect("requested horizon"))
                });
            rows.push(EvalRow {
                model: model.clone(),
                source_building: source.clone(),
                target_building: target.clone(),
                horizon: m,
                outcome,
            });
        }
    }
    Ok(EvalReport::new(rows, config.notes(template)))
}
