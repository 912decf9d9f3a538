//! Forward stepwise selection stopped by Mallows' Cp.
//!
//! At each step the variable with the largest residual-sum-of-squares
//! reduction joins the model (ties to the lowest column index); the final
//! model is the prefix minimizing `Cp = RSS_k / sigma2 + 2k - m`. The
//! intercept is always included and does not count toward k.

use super::{SelectedModel, SelectorDiagnostics, SelectorError};
use crate::data::Dataset;
use crate::linalg::{design, lstsq};
use crate::stats;

/// Per-step record of the greedy search, model sizes 0..=K.
#[derive(Debug, Clone)]
pub struct CpTrace {
    /// Model size k at each step (0 = intercept only).
    pub sizes: Vec<usize>,
    /// Column added at each step; `None` for the intercept-only row.
    pub added: Vec<Option<usize>>,
    /// Residual sum of squares per step; nonincreasing in k.
    pub rss: Vec<f64>,
    /// Cp score per step.
    pub cp: Vec<f64>,
    /// Residual variance the scores were computed with.
    pub sigma2_hat: f64,
}

#[derive(Debug, Clone, Default)]
pub struct StepwiseOptions {
    /// Greedy steps to explore; defaults to `min(p, m-2)`.
    pub max_steps: Option<usize>,
    /// Residual variance for Cp. When absent it comes from the full OLS fit
    /// if `m > p + 1`, else from 10-fold cross-validated lasso residuals if
    /// `m >= 20`, else the call fails.
    pub sigma2: Option<f64>,
}

/// Forward stepwise with the default variance estimate.
pub fn forward_stepwise(
    data: &Dataset,
    max_steps: usize,
) -> Result<(SelectedModel, CpTrace), SelectorError> {
    forward_stepwise_with(
        data,
        &StepwiseOptions {
            max_steps: Some(max_steps),
            sigma2: None,
        },
    )
}

pub fn forward_stepwise_with(
    data: &Dataset,
    opts: &StepwiseOptions,
) -> Result<(SelectedModel, CpTrace), SelectorError> {
    let (m, p) = (data.n(), data.p());
    if m < 3 {
        return Err(SelectorError::InvalidParameter(format!(
            "stepwise needs at least 3 rows, got {m}"
        )));
    }
    let step_cap = p.min(m - 2);
    let max_steps = opts.max_steps.unwrap_or(step_cap);
    if max_steps > step_cap {
        return Err(SelectorError::InvalidParameter(format!(
            "max_steps={max_steps} exceeds min(p, m-2)={step_cap}"
        )));
    }
    let sigma2 = estimate_sigma2(data, opts.sigma2)?;

    let y = data.y();
    let y_mean = y.mean();
    let rss0: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();

    let mut order: Vec<usize> = Vec::with_capacity(max_steps);
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut rss_trace = vec![rss0];
    let mut added = vec![None];
    let mut current_rss = rss0;
    for _ in 0..max_steps {
        let mut best: Option<(usize, f64)> = None;
        for &j in &remaining {
            let mut candidate = order.clone();
            candidate.push(j);
            let fit = lstsq(&design(data.x(), &candidate, true), y);
            // Strict comparison keeps ties on the lowest column index,
            // since `remaining` is ascending.
            if best.map_or(true, |(_, b)| fit.rss < b) {
                best = Some((j, fit.rss));
            }
        }
        let (j, rss) = best.expect("remaining nonempty while steps < p");
        order.push(j);
        remaining.retain(|&k| k != j);
        rss_trace.push(rss.min(current_rss));
        added.push(Some(j));
        current_rss = rss.min(current_rss);
    }

    let cp: Vec<f64> = rss_trace
        .iter()
        .enumerate()
        .map(|(k, rss)| rss / sigma2 + 2.0 * k as f64 - m as f64)
        .collect();
    let best_k = cp
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .map(|(k, _)| k)
        .unwrap();

    let subset: Vec<usize> = order[..best_k].to_vec();
    let (coefficients, intercept) = if subset.is_empty() {
        (Vec::new(), y_mean)
    } else {
        let fit = lstsq(&design(data.x(), &subset, true), y);
        (fit.coef.as_slice()[1..].to_vec(), fit.coef[0])
    };
    let trace = CpTrace {
        sizes: (0..rss_trace.len()).collect(),
        added,
        rss: rss_trace,
        cp,
        sigma2_hat: sigma2,
    };
    let model = SelectedModel::new(
        p,
        subset,
        &coefficients,
        intercept,
        "stepwise",
        y_mean,
        SelectorDiagnostics::Stepwise(trace.clone()),
    );
    Ok((model, trace))
}

fn estimate_sigma2(data: &Dataset, user: Option<f64>) -> Result<f64, SelectorError> {
    if let Some(s2) = user {
        if !(s2.is_finite() && s2 > 0.0) {
            return Err(SelectorError::InvalidParameter(format!(
                "sigma2 must be positive and finite, got {s2}"
            )));
        }
        return Ok(s2);
    }
    let (m, p) = (data.n(), data.p());
    let estimate = if m > p + 1 {
        let fit = lstsq(&design(data.x(), &(0..p).collect::<Vec<_>>(), true), data.y());
        let dof = (m - fit.rank).max(1);
        fit.rss / dof as f64
    } else if m >= 20 {
        let cv = super::cross_validate_lasso(data, 50, 1e-3, 10)?;
        cv.cv_mse[cv.best_index]
    } else {
        return Err(SelectorError::VarianceUnavailable { m, p });
    };
    // Exact fits would zero the Cp denominator; floor keeps size-k=exact-fit
    // prefixes winning without dividing by zero.
    let var_y = stats::sample_variance(data.y().as_slice());
    Ok(estimate.max(1e-12 * var_y).max(f64::MIN_POSITIVE))
}
