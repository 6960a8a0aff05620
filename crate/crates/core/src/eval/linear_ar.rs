//! Ridge-regularised linear autoregression, fitted through the normal
//! equations and usable as a sentence backend.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::backend::{Backend, BackendAnswer, BackendError, GenerationContext};
use crate::codec::PromptTemplate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("order must be at least 1")]
    InvalidOrder,
    #[error("ridge penalty {0} must be finite and non-negative")]
    InvalidLambda(f64),
    #[error("training series has {len} values; more than the order {order} are needed")]
    SeriesTooShort { len: usize, order: usize },
    #[error("normal equations are singular")]
    SingularSystem,
}

/// Weights `w_1..w_p` applied to lags 1..p.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearArModel {
    weights: Vec<f64>,
    lambda: f64,
}

fn design(values: &[f64], order: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows = values.len() - order;
    let x = DMatrix::from_fn(rows, order, |i, j| values[i + order - 1 - j]);
    let y = DVector::from_fn(rows, |i, _| values[i + order]);
    (x, y)
}

impl LinearArModel {
    /// Minimises `Σ (x_t - Σ_j w_j x_{t-j})² + λ‖w‖²`.
    ///
    /// Solves `(XᵀX + λI) w = Xᵀy` by Cholesky. With `λ = 0` and collinear
    /// lags (a constant series, say) the system is only positive
    /// semi-definite; the minimum-norm solution is taken then, and
    /// [`FitError::SingularSystem`] is reserved for an all-zero system.
    pub fn fit(values: &[f64], order: usize, lambda: f64) -> Result<Self, FitError> {
        if order == 0 {
            return Err(FitError::InvalidOrder);
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(FitError::InvalidLambda(lambda));
        }
        if values.len() <= order {
            return Err(FitError::SeriesTooShort {
                len: values.len(),
                order,
            });
        }
        let (x, y) = design(values, order);
        let xt = x.transpose();
        let gram = &xt * &x + DMatrix::identity(order, order) * lambda;
        let rhs = &xt * &y;

        let weights = match gram.clone().cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => {
                let svd = gram.svd(true, true);
                let largest = svd.singular_values.max();
                if largest == 0.0 || !largest.is_finite() {
                    return Err(FitError::SingularSystem);
                }
                let eps = largest * 1e-12 * order as f64;
                svd.solve(&rhs, eps).map_err(|_| FitError::SingularSystem)?
            }
        };
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(FitError::SingularSystem);
        }
        Ok(Self {
            weights: weights.iter().copied().collect(),
            lambda,
        })
    }

    pub fn order(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn combine(&self, recent: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(recent.iter().rev())
            .map(|(w, x)| w * x)
            .sum()
    }

    /// Next value from the `order` most recent values (oldest first), clamped at 0.
    ///
    /// Panics if fewer than `order` values are given.
    pub fn predict_next(&self, recent: &[f64]) -> f64 {
        assert!(recent.len() >= self.order(), "need {} lags", self.order());
        self.combine(&recent[recent.len() - self.order()..]).max(0.0)
    }

    /// Root mean squared one-step residual over a series, before clamping.
    pub fn residual_rms(&self, values: &[f64]) -> f64 {
        let p = self.order();
        if values.len() <= p {
            return 0.0;
        }
        let sq: f64 = (p..values.len())
            .map(|t| {
                let e = values[t] - self.combine(&values[t - p..t]);
                e * e
            })
            .sum();
        (sq / (values.len() - p) as f64).sqrt()
    }
}

/// A fitted [`LinearArModel`] driven through the sentence interface.
#[derive(Debug, Clone)]
pub struct LinearArBackend {
    model: LinearArModel,
    template: PromptTemplate,
}

impl LinearArBackend {
    pub fn new(model: LinearArModel, template: PromptTemplate) -> Self {
        Self { model, template }
    }

    pub fn model(&self) -> &LinearArModel {
        &self.model
    }
}

impl Backend for LinearArBackend {
    fn next_sentence(&self, ctx: &GenerationContext) -> Result<BackendAnswer, BackendError> {
        let p = self.model.order();
        let sentences = ctx.sentences();
        if sentences.len() < p {
            return Err(BackendError::ContextTooShort {
                needed: p,
                got: sentences.len(),
            });
        }
        let recent = sentences[sentences.len() - p..]
            .iter()
            .map(|s| {
                crate::backend::sentence_value(&self.template, s)
                    .ok_or_else(|| BackendError::ContextUnparseable(s.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let value = self.model.predict_next(&recent);
        Ok(BackendAnswer::immediate(
            self.template.render_at(ctx.next_timestamp_hint(), value),
        ))
    }
}
