use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("prediction and ground truth lengths differ ({pred} vs {truth})")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

fn residuals<'a>(pred: &'a [f64], truth: &'a [f64]) -> Result<impl Iterator<Item = f64> + 'a, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if let Some(i) = pred
        .iter()
        .zip(truth)
        .position(|(p, t)| !p.is_finite() || !t.is_finite())
    {
        return Err(MetricError::NonFinite(i));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| p - t))
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    let n = pred.len() as f64;
    Ok((residuals(pred, truth)?.map(|e| e * e).sum::<f64>() / n).sqrt())
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    let n = pred.len() as f64;
    Ok(residuals(pred, truth)?.map(f64::abs).sum::<f64>() / n)
}

/// Residuals pooled across many (window, step) pairs.
///
/// Sums are taken over the residuals in sorted order, so the result does not
/// depend on the order windows were added or merged in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PooledErrors {
    residuals: Vec<f64>,
}

impl PooledErrors {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one batch of residuals. An empty batch is a no-op.
    pub fn add(&mut self, pred: &[f64], truth: &[f64]) -> Result<(), MetricError> {
        if pred.is_empty() && truth.is_empty() {
            return Ok(());
        }
        let r: Vec<f64> = residuals(pred, truth)?.collect();
        self.residuals.extend(r);
        Ok(())
    }

    pub fn merge(&mut self, other: PooledErrors) {
        self.residuals.extend(other.residuals);
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    /// `(rmse, mae)`, or `None` when nothing was pooled.
    pub fn finish(&self) -> Option<(f64, f64)> {
        if self.residuals.is_empty() {
            return None;
        }
        let mut abs: Vec<f64> = self.residuals.iter().map(|e| e.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let n = abs.len() as f64;
        let mae = abs.iter().sum::<f64>() / n;
        let rmse = (abs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
        // Equal residuals can leave the square root one ulp under the mean.
        Some((rmse.max(mae), mae))
    }
}
