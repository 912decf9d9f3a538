//! Split-sample inference for a selected model: predictive-risk intervals,
//! per-variable risk inflation, and the projected (best linear) parameters,
//! all computed on the held-out half conditional on the selection half.
//!
//! The normal-approximation intervals are valid without any model
//! assumptions; the order-statistic interval for the median risk is exact in
//! finite samples.

use crate::data::{split, standardize, DataError, Dataset, SplitPair, StandardizationRecord};
use crate::exec;
use crate::linalg::{design, gram_condition, lstsq};
use crate::selectors::{select, SelectedModel, SelectorError, SelectorSpec};
use crate::stats;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("alpha must lie in (0,1), got {0}")]
    InvalidAlpha(f64),
    #[error("split stage failed: {0}")]
    Split(#[from] DataError),
    #[error("selection stage failed: {0}")]
    Selection(#[from] SelectorError),
    #[error(
        "order-statistic interval infeasible: m2={m2} rows support at most \
         {achievable:.6} two-sided coverage, below 1 - alpha = {requested}"
    )]
    InfeasibleLevel {
        m2: usize,
        requested: f64,
        achievable: f64,
    },
    #[error("risk inflation needs a nonempty selection")]
    EmptySelection,
    #[error("design for the projected fit is singular (gram condition {condition:.3e})")]
    SingularDesign { condition: f64 },
    #[error("projected fit needs |S|+1 = {k} < m2 = {m2} rows")]
    TooFewRows { k: usize, m2: usize },
    #[error("model has {model_p} columns but data has {data_p}")]
    DimensionMismatch { model_p: usize, data_p: usize },
}

/// Loss scale for risk-type quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RiskScale {
    /// Absolute error |y - prediction|; the interpretable default.
    #[default]
    Absolute,
    /// Squared error (y - prediction)^2.
    Squared,
}

impl RiskScale {
    fn loss(self, err: f64) -> f64 {
        match self {
            RiskScale::Absolute => err.abs(),
            RiskScale::Squared => err * err,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RiskScale::Absolute => "absolute",
            RiskScale::Squared => "squared",
        }
    }
}

/// Family-wise correction applied to an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    None,
    Bonferroni(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalMethod {
    Normal,
    OrderStatistic,
    LeastSquares,
}

impl IntervalMethod {
    pub fn label(self) -> &'static str {
        match self {
            IntervalMethod::Normal => "normal",
            IntervalMethod::OrderStatistic => "order_statistic",
            IntervalMethod::LeastSquares => "least_squares",
        }
    }
}

/// One labeled interval: point estimate, bounds, family confidence level,
/// and the correction/method that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    pub label: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Family confidence level 1 - alpha. Under `Bonferroni(k)` the bounds
    /// are computed at the per-interval level alpha / k.
    pub level: f64,
    pub correction: Correction,
    pub method: IntervalMethod,
}

impl IntervalReport {
    fn normal(label: &str, values: &[f64], alpha: f64, correction: Correction) -> IntervalReport {
        let k = match correction {
            Correction::None => 1,
            Correction::Bonferroni(k) => k.max(1),
        };
        let estimate = stats::mean(values);
        let sd = stats::sample_sd(values);
        let half = if sd == 0.0 {
            // Degenerate spread: legitimate for deterministic relationships.
            0.0
        } else {
            stats::z_two_sided(alpha / k as f64) * sd / (values.len() as f64).sqrt()
        };
        IntervalReport {
            label: label.to_string(),
            estimate,
            lower: estimate - half,
            upper: estimate + half,
            level: 1.0 - alpha,
            correction,
            method: IntervalMethod::Normal,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Predictive-risk report: the selected model's interval, the per-row losses
/// behind it, and the intercept-only baseline evaluated on the same rows.
#[derive(Debug, Clone)]
pub struct RiskReport {
    pub risk: IntervalReport,
    pub deltas: Vec<f64>,
    pub scale: RiskScale,
    pub null_risk: IntervalReport,
}

/// Per-variable risk inflation from zeroing one selected coefficient.
/// Keys are exactly the selected subset, in selection order.
#[derive(Debug, Clone)]
pub struct InflationReport {
    pub per_variable: Vec<(usize, IntervalReport)>,
    pub e_values: Vec<(usize, Vec<f64>)>,
}

/// Least-squares fit of the held-out response on the selected columns:
/// the best linear approximation over those variables, meaningful whether or
/// not the linear model holds.
#[derive(Debug, Clone)]
pub struct ProjectedReport {
    /// Intercept first, then one coefficient per selected column.
    pub beta_star_hat: Vec<f64>,
    pub labels: Vec<String>,
    pub intervals: Vec<IntervalReport>,
    /// Coefficient covariance, (|S|+1) x (|S|+1).
    pub covariance: DMatrix<f64>,
}

/// Covariance estimator for the projected fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovEstimator {
    /// Heteroskedasticity-robust sandwich; valid when the linear model is
    /// false, which is the operating assumption here.
    #[default]
    RobustSandwich,
    /// Classical sigma^2 (X'X)^-1.
    Classical,
}

fn check_dims(d2: &Dataset, model: &SelectedModel) -> Result<(), HarnessError> {
    if model.p() != d2.p() {
        return Err(HarnessError::DimensionMismatch {
            model_p: model.p(),
            data_p: d2.p(),
        });
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<(), HarnessError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HarnessError::InvalidAlpha(alpha));
    }
    Ok(())
}

fn losses(d2: &Dataset, model: &SelectedModel, scale: RiskScale) -> Vec<f64> {
    let pred = model.predict(d2);
    d2.y()
        .iter()
        .zip(pred.iter())
        .map(|(y, f)| scale.loss(y - f))
        .collect()
}

/// Mean-risk interval for the model on held-out rows, plus the same report
/// for the intercept-only baseline fit on the selection half
/// (`model.train_response_mean`).
pub fn risk_interval(
    d2: &Dataset,
    model: &SelectedModel,
    alpha: f64,
    scale: RiskScale,
) -> Result<RiskReport, HarnessError> {
    check_alpha(alpha)?;
    check_dims(d2, model)?;
    let deltas = losses(d2, model, scale);
    let risk = IntervalReport::normal("risk_selected", &deltas, alpha, Correction::None);
    let null_deltas: Vec<f64> = d2
        .y()
        .iter()
        .map(|y| scale.loss(y - model.train_response_mean))
        .collect();
    let null_risk = IntervalReport::normal("risk_null", &null_deltas, alpha, Correction::None);
    Ok(RiskReport {
        risk,
        deltas,
        scale,
        null_risk,
    })
}

/// Exact finite-sample interval for the median of the loss distribution,
/// from order statistics of the per-row losses and binomial tail ranks.
pub fn median_risk_interval(
    d2: &Dataset,
    model: &SelectedModel,
    alpha: f64,
    scale: RiskScale,
) -> Result<IntervalReport, HarnessError> {
    check_alpha(alpha)?;
    check_dims(d2, model)?;
    let mut deltas = losses(d2, model, scale);
    let m2 = deltas.len();
    let (l, u, coverage) = stats::median_ci_ranks(m2, alpha).ok_or_else(|| {
        let achievable = if m2 >= 1 {
            1.0 - 2.0 * 0.5_f64.powi(m2 as i32)
        } else {
            0.0
        };
        HarnessError::InfeasibleLevel {
            m2,
            requested: 1.0 - alpha,
            achievable,
        }
    })?;
    deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(IntervalReport {
        label: "risk_median".to_string(),
        estimate: stats::median(&deltas),
        lower: deltas[l - 1],
        upper: deltas[u - 1],
        level: coverage,
        correction: Correction::None,
        method: IntervalMethod::OrderStatistic,
    })
}

/// Risk inflation per selected variable: the loss increase on held-out rows
/// when that coefficient is zeroed out of the predictor.
pub fn risk_inflation(
    d2: &Dataset,
    model: &SelectedModel,
    alpha: f64,
    bonferroni: bool,
    scale: RiskScale,
) -> Result<InflationReport, HarnessError> {
    check_alpha(alpha)?;
    check_dims(d2, model)?;
    if model.subset.is_empty() {
        return Err(HarnessError::EmptySelection);
    }
    let base = losses(d2, model, scale);
    let correction = if bonferroni {
        Correction::Bonferroni(model.subset.len())
    } else {
        Correction::None
    };
    let per_j: Vec<(usize, Vec<f64>)> = exec::map_slice(&model.subset, |&j| {
        let dropped = model.with_coefficient_zeroed(j);
        let inflated = losses(d2, &dropped, scale);
        let e: Vec<f64> = inflated
            .iter()
            .zip(base.iter())
            .map(|(a, b)| a - b)
            .collect();
        (j, e)
    });
    let mut per_variable = Vec::with_capacity(per_j.len());
    for (j, e) in &per_j {
        per_variable.push((
            *j,
            IntervalReport::normal(&format!("inflation_{}", d2.names()[*j]), e, alpha, correction),
        ));
    }
    Ok(InflationReport {
        per_variable,
        e_values: per_j,
    })
}

/// Least-squares projection of the held-out response on the selected columns
/// (plus intercept), with robust or classical coefficient intervals.
pub fn projected_params(
    d2: &Dataset,
    model: &SelectedModel,
    alpha: f64,
    bonferroni: bool,
    estimator: CovEstimator,
) -> Result<ProjectedReport, HarnessError> {
    check_alpha(alpha)?;
    check_dims(d2, model)?;
    let m2 = d2.n();
    let k = model.subset.len() + 1;
    if k >= m2 {
        return Err(HarnessError::TooFewRows { k, m2 });
    }
    let x = design(d2.x(), &model.subset, true);
    let condition = gram_condition(&x);
    if !(condition < 1e12) {
        return Err(HarnessError::SingularDesign { condition });
    }
    let fit = lstsq(&x, d2.y());
    let residuals = d2.y() - &fit.fitted;

    let gram_inv = (x.transpose() * &x)
        .try_inverse()
        .ok_or(HarnessError::SingularDesign { condition })?;
    let covariance = match estimator {
        CovEstimator::RobustSandwich => {
            // (X'X)^-1 (sum_i e_i^2 x_i x_i') (X'X)^-1
            let mut meat = DMatrix::<f64>::zeros(k, k);
            for i in 0..m2 {
                let xi = x.row(i).transpose();
                let w = residuals[i] * residuals[i];
                meat.syger(w, &xi, &xi, 1.0);
            }
            &gram_inv * meat * &gram_inv
        }
        CovEstimator::Classical => {
            let dof = (m2 - k).max(1);
            let sigma2 = residuals.dot(&residuals) / dof as f64;
            gram_inv * sigma2
        }
    };

    let correction = if bonferroni && !model.subset.is_empty() {
        Correction::Bonferroni(model.subset.len())
    } else {
        Correction::None
    };
    let k_corr = match correction {
        Correction::None => 1,
        Correction::Bonferroni(k) => k.max(1),
    };
    let z = stats::z_two_sided(alpha / k_corr as f64);
    let mut labels = vec!["(intercept)".to_string()];
    labels.extend(model.subset.iter().map(|&j| d2.names()[j].clone()));
    let mut intervals = Vec::with_capacity(k);
    for i in 0..k {
        let se = covariance[(i, i)].max(0.0).sqrt();
        let estimate = fit.coef[i];
        intervals.push(IntervalReport {
            label: format!("projected_{}", labels[i]),
            estimate,
            lower: estimate - z * se,
            upper: estimate + z * se,
            level: 1.0 - alpha,
            correction,
            method: IntervalMethod::LeastSquares,
        });
    }
    Ok(ProjectedReport {
        beta_star_hat: fit.coef.as_slice().to_vec(),
        labels,
        intervals,
        covariance,
    })
}

/// Full pipeline configuration. Defaults follow the worked-example setup:
/// 95% intervals, Bonferroni on, absolute risk scale, coefficients taken
/// from the selection half.
#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub alpha: f64,
    pub seed: u64,
    pub selector: SelectorSpec,
    pub bonferroni: bool,
    pub scale: RiskScale,
    /// Refit the selected coefficients on the inference half; selection
    /// still provides only the subset. Off by default: the pipeline's risk
    /// statements are about the selection-half coefficients.
    pub refit_on_d2: bool,
    /// Standardize predictors by selection-half statistics before selecting.
    pub standardize: bool,
    pub covariance: CovEstimator,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            seed: 0,
            selector: SelectorSpec::stepwise(),
            bonferroni: true,
            scale: RiskScale::Absolute,
            refit_on_d2: false,
            standardize: true,
            covariance: CovEstimator::RobustSandwich,
        }
    }
}

/// Everything one pipeline run produces. `inflation` is `None` when the
/// selection came back empty, in which case only the baseline risk applies.
#[derive(Debug, Clone)]
pub struct HarnessOutput {
    pub split: SplitPair,
    pub standardization: StandardizationRecord,
    pub model: SelectedModel,
    pub risk: RiskReport,
    pub inflation: Option<InflationReport>,
    pub projected: ProjectedReport,
}

/// Runs the split-sample pipeline: split, select on the first half,
/// then risk, inflation, and projected-parameter inference on the second
/// half, conditional on the first. Deterministic given `(data, config)`.
pub fn run_harness(data: &Dataset, config: &HarnessConfig) -> Result<HarnessOutput, HarnessError> {
    check_alpha(config.alpha)?;
    let split_pair = split(data, config.seed)?;
    let (d1, d2, record) = if config.standardize {
        standardize(split_pair.d1(), split_pair.d2())?
    } else {
        (
            split_pair.d1().clone(),
            split_pair.d2().clone(),
            StandardizationRecord::identity(data.p()),
        )
    };
    let mut model = select(&d1, &config.selector)?;
    if config.refit_on_d2 && !model.subset.is_empty() {
        let fit = lstsq(&design(d2.x(), &model.subset, true), d2.y());
        let coefficients: Vec<f64> = fit.coef.as_slice()[1..].to_vec();
        let subset = model.subset.clone();
        let selector_id = format!("{}+d2refit", model.selector_id);
        let diagnostics = model.diagnostics.clone();
        let train_mean = model.train_response_mean;
        model = SelectedModel::new(
            data.p(),
            subset,
            &coefficients,
            fit.coef[0],
            &selector_id,
            train_mean,
            diagnostics,
        );
    }
    let risk = risk_interval(&d2, &model, config.alpha, config.scale)?;
    let inflation = if model.subset.is_empty() {
        None
    } else {
        Some(risk_inflation(
            &d2,
            &model,
            config.alpha,
            config.bonferroni,
            config.scale,
        )?)
    };
    let projected = projected_params(
        &d2,
        &model,
        config.alpha,
        config.bonferroni,
        config.covariance,
    )?;
    Ok(HarnessOutput {
        split: split_pair,
        standardization: record,
        model,
        risk,
        inflation,
        projected,
    })
}
