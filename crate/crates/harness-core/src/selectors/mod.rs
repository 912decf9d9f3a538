//! Variable selection on the first data half: forward stepwise with a Cp
//! stopping rule, penalized lasso over a lambda path, and the l1-ball
//! constrained lasso.

mod lasso;
mod stepwise;

pub use lasso::{lambda_max, lasso_at, lasso_constrained, lasso_path, LassoPath};
pub(crate) use lasso::{cross_validate_lasso, CdSolver, CdState, CD_MAX_SWEEPS, CD_TOL};
pub use stepwise::{forward_stepwise, forward_stepwise_with, CpTrace, StepwiseOptions};

use crate::data::Dataset;
use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectorError {
    #[error("unknown selector {0:?}")]
    UnknownSelector(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "residual variance unavailable: m={m} rows, p={p} columns leave no \
         degrees of freedom and too few rows for cross-validation; supply sigma2"
    )]
    VarianceUnavailable { m: usize, p: usize },
    #[error("coordinate descent did not converge at lambda index {lambda_index} (lambda={lambda})")]
    NonConvergence { lambda_index: usize, lambda: f64 },
    #[error(
        "l1-budget bisection failed: best achievable norm {achieved} for budget {budget} \
         (norm not monotone within solver tolerance)"
    )]
    BisectionFailure { achieved: f64, budget: f64 },
    #[error("conformal lambda selection failed: {0}")]
    LambdaSelection(String),
}

/// Output of any selector: the chosen column subset and a full-length
/// coefficient vector that is exactly zero off the subset.
#[derive(Debug, Clone)]
pub struct SelectedModel {
    /// Selected column indices in selection order, duplicate-free.
    pub subset: Vec<usize>,
    /// Coefficients over all p columns; zero outside `subset`.
    pub beta_hat: DVector<f64>,
    pub intercept: f64,
    /// Which selector produced the model.
    pub selector_id: String,
    /// Mean of the training response; the intercept-only baseline predictor.
    pub train_response_mean: f64,
    pub diagnostics: SelectorDiagnostics,
}

#[derive(Debug, Clone)]
pub enum SelectorDiagnostics {
    None,
    Stepwise(CpTrace),
    Lasso(LassoDiagnostics),
    Constrained(ConstrainedDiagnostics),
}

#[derive(Debug, Clone)]
pub struct LassoDiagnostics {
    /// Penalty the final model was fit at.
    pub lambda: f64,
    /// How the penalty was chosen ("fixed", "cv(k)", "conformal_length").
    pub rule: String,
    pub path: LassoPath,
}

#[derive(Debug, Clone)]
pub struct ConstrainedDiagnostics {
    pub budget: f64,
    pub l1_norm: f64,
    /// Penalty level located by bisection; `None` when the budget was slack.
    pub lambda: Option<f64>,
    pub binding: bool,
}

impl SelectedModel {
    /// Builds a model from a subset and its coefficients; useful for
    /// evaluating externally chosen predictors with the inference
    /// machinery. Panics if the subset repeats or leaves `0..p`.
    pub fn new(
        p: usize,
        subset: Vec<usize>,
        coefficients: &[f64],
        intercept: f64,
        selector_id: &str,
        train_response_mean: f64,
        diagnostics: SelectorDiagnostics,
    ) -> Self {
        assert_eq!(subset.len(), coefficients.len());
        let mut beta_hat = DVector::zeros(p);
        for (&j, &c) in subset.iter().zip(coefficients) {
            assert!(j < p, "subset index {j} out of range for p={p}");
            assert_eq!(beta_hat[j], 0.0, "duplicate subset index {j}");
            beta_hat[j] = c;
        }
        Self {
            subset,
            beta_hat,
            intercept,
            selector_id: selector_id.to_string(),
            train_response_mean,
            diagnostics,
        }
    }

    pub fn p(&self) -> usize {
        self.beta_hat.len()
    }

    /// Prediction for one row of predictors.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .subset
                .iter()
                .map(|&j| self.beta_hat[j] * row[j])
                .sum::<f64>()
    }

    /// Predictions for every row of `data`.
    pub fn predict(&self, data: &Dataset) -> DVector<f64> {
        DVector::from_fn(data.n(), |i, _| {
            self.intercept
                + self
                    .subset
                    .iter()
                    .map(|&j| self.beta_hat[j] * data.x()[(i, j)])
                    .sum::<f64>()
        })
    }

    /// Copy of the model with coefficient `j` set to zero. The subset is
    /// unchanged, so the variable stays accounted for in reports.
    pub fn with_coefficient_zeroed(&self, j: usize) -> SelectedModel {
        let mut out = self.clone();
        out.beta_hat[j] = 0.0;
        out
    }
}

/// Configuration for [`select`].
#[derive(Debug, Clone)]
pub enum SelectorSpec {
    Stepwise {
        /// Greedy steps to explore; defaults to `min(p, m-2)`.
        max_steps: Option<usize>,
        /// Residual variance for Cp; estimated from the data when absent.
        sigma2: Option<f64>,
    },
    Lasso {
        k_lambdas: usize,
        lambda_min_ratio: f64,
        rule: LambdaRule,
    },
}

/// How the lasso selector picks its penalty along the path.
#[derive(Debug, Clone)]
pub enum LambdaRule {
    Fixed(f64),
    /// k-fold cross-validation over the path grid (deterministic folds).
    CrossValidation { folds: usize },
    /// Shortest conformal prediction interval over the path, evaluated at
    /// `x_new` (defaults to the column means of the selection data).
    ConformalLength {
        alpha: f64,
        x_new: Option<Vec<f64>>,
    },
}

impl SelectorSpec {
    pub const DEFAULT_K_LAMBDAS: usize = 100;
    pub const DEFAULT_LAMBDA_MIN_RATIO: f64 = 1e-3;

    pub fn stepwise() -> Self {
        SelectorSpec::Stepwise {
            max_steps: None,
            sigma2: None,
        }
    }

    pub fn lasso_cv() -> Self {
        SelectorSpec::Lasso {
            k_lambdas: Self::DEFAULT_K_LAMBDAS,
            lambda_min_ratio: Self::DEFAULT_LAMBDA_MIN_RATIO,
            rule: LambdaRule::CrossValidation { folds: 10 },
        }
    }

    /// Resolves a selector name from configuration or the command line.
    pub fn parse(id: &str) -> Result<Self, SelectorError> {
        match id {
            "stepwise" => Ok(Self::stepwise()),
            "lasso" => Ok(Self::lasso_cv()),
            other => Err(SelectorError::UnknownSelector(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            SelectorSpec::Stepwise { .. } => "stepwise",
            SelectorSpec::Lasso { .. } => "lasso",
        }
    }
}

/// Runs the configured selector on `data`.
pub fn select(data: &Dataset, spec: &SelectorSpec) -> Result<SelectedModel, SelectorError> {
    match spec {
        SelectorSpec::Stepwise { max_steps, sigma2 } => {
            let opts = StepwiseOptions {
                max_steps: *max_steps,
                sigma2: *sigma2,
            };
            forward_stepwise_with(data, &opts).map(|(model, _)| model)
        }
        SelectorSpec::Lasso {
            k_lambdas,
            lambda_min_ratio,
            rule,
        } => lasso::select_lasso(data, *k_lambdas, *lambda_min_ratio, rule),
    }
}
