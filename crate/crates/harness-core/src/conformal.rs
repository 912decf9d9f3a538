//! Full conformal prediction: distribution-free, finite-sample prediction
//! intervals for a new point built by inverting augmented-fit permutation
//! p-values.
//!
//! For a trial response value `y`, the predictor is refit to the training
//! points plus `(x_new, y)`; the p-value is the fraction of the n+1 absolute
//! residuals at least as large as the trial point's (ties counted in). The
//! returned interval is the convex hull of the grid points whose p-value
//! survives level `alpha`, widened outward by one grid step. The hull may
//! over-cover when the accepted set is a union of intervals; it never
//! under-covers.

use crate::data::Dataset;
use crate::exec;
use crate::linalg::design;
use crate::selectors::{CdSolver, CdState, LassoPath, CD_MAX_SWEEPS, CD_TOL};
use crate::stats;
use nalgebra::{Cholesky, DMatrix, DVector};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("alpha must lie in (0,1), got {0}")]
    InvalidAlpha(f64),
    #[error("query point has {got} coordinates, data has p={expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("subset index {0} out of range")]
    InvalidSubset(usize),
    #[error("grid needs at least 16 points, got {0}")]
    GridTooCoarse(usize),
    #[error("predictor fit failed: {detail}")]
    SingularFit { detail: String },
    #[error("predictor fit failed: {detail}")]
    PredictorFit { detail: String },
    #[error(
        "prediction set is unbounded at alpha={alpha}: grid edges still accepted \
         after the widening cap (widest hull found: [{}, {}])", hull.0, hull.1
    )]
    UnboundedInterval { hull: (f64, f64), alpha: f64 },
    #[error("no grid point was accepted; increase the grid resolution")]
    EmptyAcceptedSet,
    #[error("every path penalty produced an unbounded interval")]
    NoFiniteInterval,
    #[error("lambda path is empty")]
    EmptyPath,
    #[error("variable subset is empty")]
    EmptySubset,
    #[error("fit for variable {variable} failed: {source}")]
    VariableFit {
        variable: usize,
        #[source]
        source: Box<ConformalError>,
    },
}

/// A symmetric residual generator: refitting with permuted rows must permute
/// the residuals identically. That exchangeability is the only requirement
/// conformal validity places on the predictor.
pub trait ResidualModel: Send + Sync {
    fn id(&self) -> &str;
    /// One residual per point, in input order.
    fn fit_residuals(
        &self,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>, ConformalError>;
    /// Point forecast at `x_query` from a fit to `(x, y)` alone; used only
    /// to center the search grid.
    fn point_forecast(
        &self,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        x_query: &[f64],
    ) -> Result<f64, ConformalError>;
}

/// Which predictor generates the conformity residuals.
#[derive(Clone)]
pub enum PredictorSpec {
    /// Least squares on all columns plus intercept.
    OlsFull,
    /// Least squares on the given columns plus intercept; an empty subset is
    /// the intercept-only predictor.
    OlsSubset(Vec<usize>),
    /// Lasso at a fixed penalty, intercept unpenalized.
    Lasso { lambda: f64 },
    /// Caller-supplied symmetric residual model.
    Custom(Arc<dyn ResidualModel>),
}

impl std::fmt::Debug for PredictorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PredictorSpec::OlsFull => write!(f, "OlsFull"),
            PredictorSpec::OlsSubset(s) => write!(f, "OlsSubset({s:?})"),
            PredictorSpec::Lasso { lambda } => write!(f, "Lasso {{ lambda: {lambda} }}"),
            PredictorSpec::Custom(m) => write!(f, "Custom({:?})", m.id()),
        }
    }
}

/// Search-grid policy for inverting the p-value function.
#[derive(Debug, Clone)]
pub struct GridSpec {
    /// Points per grid pass; at least 16.
    pub points: usize,
    /// Half-width doublings allowed before the set is declared unbounded.
    pub max_doublings: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 1000,
            max_doublings: 10,
        }
    }
}

/// Grid of evaluated `(y, p(y))` pairs and the accepted set's interval hull.
#[derive(Debug, Clone)]
pub struct ConformalResult {
    pub grid: Vec<(f64, f64)>,
    pub accepted_hull: (f64, f64),
    pub length: f64,
    pub alpha: f64,
    pub x_new: Vec<f64>,
}

/// Relative slack, anchored to the response scale, under which two absolute
/// residuals count as tied. Exact-arithmetic ties survive floating-point
/// round-off this way; the slack can only raise a p-value, which keeps the
/// coverage guarantee intact.
const TIE_EPS_REL: f64 = 1e-10;

enum Fitter<'a> {
    /// OLS residuals are affine in the trial response: `e(t) = e0 + t e1`.
    Affine {
        e0: DVector<f64>,
        e1: DVector<f64>,
        forecast: f64,
        train_residuals: Vec<f64>,
        y_scale: f64,
    },
    /// Lasso refits run in internally standardized predictor coordinates
    /// (statistics over all n+1 rows, so the residual map stays symmetric
    /// in the points and scale-robust).
    Lasso {
        x_aug_std: DMatrix<f64>,
        y_train: &'a DVector<f64>,
        lambda: f64,
        warm_beta: DVector<f64>,
        warm_intercept: f64,
        forecast: f64,
        train_residuals: Vec<f64>,
        y_scale: f64,
    },
    Custom {
        model: Arc<dyn ResidualModel>,
        x_aug: DMatrix<f64>,
        y_train: &'a DVector<f64>,
        forecast: f64,
        train_residuals: Vec<f64>,
        y_scale: f64,
    },
}

fn response_scale(y: &DVector<f64>) -> f64 {
    y.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Inclusive count of |e_i| >= |e_trial|, with exact-arithmetic ties
/// surviving round-off via a response-scale slack.
fn count_at_least(abs_residuals: &[f64], trial: f64, tie_eps: f64) -> usize {
    abs_residuals
        .iter()
        .filter(|e| **e >= trial - tie_eps)
        .count()
}

/// Center and scale columns in place by their own mean and sample standard
/// deviation; constant columns are centered only. Affine input transforms
/// cancel, so the result depends only on the column's shape.
fn standardize_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows();
    for j in 0..x.ncols() {
        let mean = x.column(j).mean();
        let var = if n < 2 {
            0.0
        } else {
            x.column(j).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        };
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        for v in x.column_mut(j).iter_mut() {
            *v = (*v - mean) / scale;
        }
    }
}

fn augmented_rows(data: &Dataset, x_new: &[f64]) -> DMatrix<f64> {
    let n = data.n();
    let p = data.p();
    let mut x = DMatrix::zeros(n + 1, p);
    x.view_mut((0, 0), (n, p)).copy_from(data.x());
    for (j, v) in x_new.iter().enumerate() {
        x[(n, j)] = *v;
    }
    x
}

fn intercept_design(x: &DMatrix<f64>, subset: &[usize]) -> DMatrix<f64> {
    design(x, subset, true)
}

impl<'a> Fitter<'a> {
    fn build(
        data: &'a Dataset,
        x_new: &[f64],
        predictor: &PredictorSpec,
    ) -> Result<Fitter<'a>, ConformalError> {
        let p = data.p();
        if x_new.len() != p {
            return Err(ConformalError::DimensionMismatch {
                expected: p,
                got: x_new.len(),
            });
        }
        let n = data.n();
        match predictor {
            PredictorSpec::OlsFull => {
                Fitter::build_ols(data, x_new, &(0..p).collect::<Vec<_>>())
            }
            PredictorSpec::OlsSubset(subset) => {
                for &j in subset {
                    if j >= p {
                        return Err(ConformalError::InvalidSubset(j));
                    }
                }
                Fitter::build_ols(data, x_new, subset)
            }
            PredictorSpec::Lasso { lambda } => {
                if !(lambda.is_finite() && *lambda >= 0.0) {
                    return Err(ConformalError::PredictorFit {
                        detail: format!("lambda must be nonnegative and finite, got {lambda}"),
                    });
                }
                let mut x_aug_std = augmented_rows(data, x_new);
                standardize_columns(&mut x_aug_std);
                let x_train_std = x_aug_std.rows(0, n).into_owned();
                let solver = CdSolver::new(&x_train_std, data.y(), true);
                let mut state = solver.zero_state();
                solver
                    .solve(*lambda, &mut state, CD_TOL, CD_MAX_SWEEPS)
                    .map_err(|_| ConformalError::PredictorFit {
                        detail: format!("training lasso fit did not converge at lambda={lambda}"),
                    })?;
                let mut train_residuals = Vec::with_capacity(n);
                for i in 0..n {
                    let mut pred = state.intercept;
                    for j in 0..p {
                        pred += state.beta[j] * x_aug_std[(i, j)];
                    }
                    train_residuals.push(data.y()[i] - pred);
                }
                let forecast = state.intercept
                    + (0..p)
                        .map(|j| state.beta[j] * x_aug_std[(n, j)])
                        .sum::<f64>();
                Ok(Fitter::Lasso {
                    x_aug_std,
                    y_train: data.y(),
                    lambda: *lambda,
                    warm_beta: state.beta,
                    warm_intercept: state.intercept,
                    forecast,
                    train_residuals,
                    y_scale: response_scale(data.y()),
                })
            }
            PredictorSpec::Custom(model) => {
                let forecast = model.point_forecast(data.x(), data.y(), x_new)?;
                let train_residuals = model
                    .fit_residuals(data.x(), data.y())?
                    .iter()
                    .copied()
                    .collect();
                Ok(Fitter::Custom {
                    model: model.clone(),
                    x_aug: augmented_rows(data, x_new),
                    y_train: data.y(),
                    forecast,
                    train_residuals,
                    y_scale: response_scale(data.y()),
                })
            }
        }
    }

    fn build_ols(
        data: &'a Dataset,
        x_new: &[f64],
        subset: &[usize],
    ) -> Result<Fitter<'a>, ConformalError> {
        let n = data.n();
        let x_aug = augmented_rows(data, x_new);
        let a = intercept_design(&x_aug, subset);
        let k = a.ncols();
        let gram = a.transpose() * &a;
        let chol = Cholesky::new(gram).ok_or_else(|| ConformalError::SingularFit {
            detail: format!(
                "augmented least-squares design is singular ({} columns, {} rows)",
                k,
                n + 1
            ),
        })?;
        // Residuals split into a part from (y; 0) and a part from the unit
        // vector at the trial coordinate.
        let mut y0 = DVector::zeros(n + 1);
        y0.rows_mut(0, n).copy_from(data.y());
        let beta0 = chol.solve(&(a.transpose() * &y0));
        let e0 = y0 - &a * beta0;
        let query_features = a.row(n).transpose();
        let beta1 = chol.solve(&query_features);
        let mut e1 = -(&a * beta1);
        e1[n] += 1.0;
        // Train-only fit for the grid center and the initial half-width.
        let a_tr = a.rows(0, n).into_owned();
        let gram_tr = a_tr.transpose() * &a_tr;
        let chol_tr = Cholesky::new(gram_tr).ok_or_else(|| ConformalError::SingularFit {
            detail: format!(
                "training least-squares design is singular ({k} columns, {n} rows)"
            ),
        })?;
        let beta_tr = chol_tr.solve(&(a_tr.transpose() * data.y()));
        let fitted = &a_tr * &beta_tr;
        let train_residuals: Vec<f64> = data
            .y()
            .iter()
            .zip(fitted.iter())
            .map(|(y, f)| y - f)
            .collect();
        let forecast = query_features.dot(&beta_tr);
        Ok(Fitter::Affine {
            e0,
            e1,
            forecast,
            train_residuals,
            y_scale: response_scale(data.y()),
        })
    }

    fn forecast(&self) -> f64 {
        match self {
            Fitter::Affine { forecast, .. }
            | Fitter::Lasso { forecast, .. }
            | Fitter::Custom { forecast, .. } => *forecast,
        }
    }

    fn tie_eps(&self, y_trial: f64) -> f64 {
        let scale = match self {
            Fitter::Affine { y_scale, .. }
            | Fitter::Lasso { y_scale, .. }
            | Fitter::Custom { y_scale, .. } => *y_scale,
        };
        TIE_EPS_REL * scale.max(y_trial.abs())
    }

    fn train_residuals(&self) -> &[f64] {
        match self {
            Fitter::Affine {
                train_residuals, ..
            }
            | Fitter::Lasso {
                train_residuals, ..
            }
            | Fitter::Custom {
                train_residuals, ..
            } => train_residuals,
        }
    }

    /// p(y_trial) from the n+1 augmented-fit residuals; ties inclusive.
    fn pvalue(&self, y_trial: f64) -> Result<f64, ConformalError> {
        let tie_eps = self.tie_eps(y_trial);
        match self {
            Fitter::Affine { e0, e1, .. } => {
                let n1 = e0.len();
                let trial = (e0[n1 - 1] + y_trial * e1[n1 - 1]).abs();
                let count = (0..n1)
                    .filter(|&i| (e0[i] + y_trial * e1[i]).abs() >= trial - tie_eps)
                    .count();
                Ok(count as f64 / n1 as f64)
            }
            Fitter::Lasso {
                x_aug_std,
                y_train,
                lambda,
                warm_beta,
                warm_intercept,
                ..
            } => {
                let n1 = x_aug_std.nrows();
                let mut y_aug = DVector::zeros(n1);
                y_aug.rows_mut(0, n1 - 1).copy_from(*y_train);
                y_aug[n1 - 1] = y_trial;
                let solver = CdSolver::new(x_aug_std, &y_aug, true);
                let mut state = CdState {
                    beta: warm_beta.clone(),
                    intercept: *warm_intercept,
                };
                solver
                    .solve(*lambda, &mut state, CD_TOL, CD_MAX_SWEEPS)
                    .map_err(|_| ConformalError::PredictorFit {
                        detail: format!(
                            "augmented lasso fit did not converge at lambda={lambda}"
                        ),
                    })?;
                let mut residuals = Vec::with_capacity(n1);
                for i in 0..n1 {
                    let mut pred = state.intercept;
                    for j in 0..x_aug_std.ncols() {
                        pred += state.beta[j] * x_aug_std[(i, j)];
                    }
                    residuals.push((y_aug[i] - pred).abs());
                }
                let trial = residuals[n1 - 1];
                let count = count_at_least(&residuals, trial, tie_eps);
                Ok(count as f64 / n1 as f64)
            }
            Fitter::Custom {
                model,
                x_aug,
                y_train,
                ..
            } => {
                let n1 = x_aug.nrows();
                let mut y_aug = DVector::zeros(n1);
                y_aug.rows_mut(0, n1 - 1).copy_from(*y_train);
                y_aug[n1 - 1] = y_trial;
                let residuals = model.fit_residuals(x_aug, &y_aug)?;
                let abs: Vec<f64> = residuals.iter().map(|e| e.abs()).collect();
                let trial = abs[n1 - 1];
                let count = count_at_least(&abs, trial, tie_eps);
                Ok(count as f64 / n1 as f64)
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), ConformalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConformalError::InvalidAlpha(alpha));
    }
    Ok(())
}

/// Permutation p-value for the hypothesis that the response at `x_new`
/// equals `y_trial`: the predictor is refit to the augmented sample and the
/// fraction of absolute residuals at least as large as the trial point's is
/// returned. Values lie in {1/(n+1), ..., 1}.
pub fn conformal_pvalue(
    data: &Dataset,
    x_new: &[f64],
    y_trial: f64,
    predictor: &PredictorSpec,
) -> Result<f64, ConformalError> {
    let fitter = Fitter::build(data, x_new, predictor)?;
    fitter.pvalue(y_trial)
}

/// Prediction interval at level `alpha`: the convex hull of grid points with
/// `p(y) >= alpha`, widened outward by one grid step. The grid is centered
/// at the predictor's point forecast with initial half-width
/// `3 * (max |training residual| + training residual sd)`, doubling until
/// both edges are rejected or the cap is hit.
pub fn conformal_interval(
    data: &Dataset,
    x_new: &[f64],
    alpha: f64,
    predictor: &PredictorSpec,
    grid: &GridSpec,
) -> Result<ConformalResult, ConformalError> {
    check_alpha(alpha)?;
    if grid.points < 16 {
        return Err(ConformalError::GridTooCoarse(grid.points));
    }
    let fitter = Fitter::build(data, x_new, predictor)?;
    let center = fitter.forecast();
    let tr = fitter.train_residuals();
    let max_abs = tr.iter().fold(0.0_f64, |acc, e| acc.max(e.abs()));
    let sd = stats::sample_sd(tr);
    // Floor keeps the grid nondegenerate for interpolating predictors.
    let h0 = (3.0 * (max_abs + sd)).max(1e-6 * (1.0 + center.abs()));

    // Odd point count so the grid contains the point forecast exactly;
    // degenerate (near-singleton) prediction sets stay detectable.
    let half_count = grid.points / 2;
    let g = 2 * half_count + 1;
    let mut half_width = h0;
    let mut last: Option<(Vec<(f64, f64)>, f64)> = None;
    for _ in 0..=grid.max_doublings {
        let step = half_width / half_count as f64;
        let points: Vec<f64> = (0..g)
            .map(|i| center + (i as f64 - half_count as f64) * step)
            .collect();
        let pvals = exec::map_slice(&points, |&y| fitter.pvalue(y));
        let mut evaluated = Vec::with_capacity(g);
        for (y, pv) in points.iter().zip(pvals) {
            evaluated.push((*y, pv?));
        }
        let edges_rejected = evaluated[0].1 < alpha && evaluated[g - 1].1 < alpha;
        last = Some((evaluated, step));
        if edges_rejected {
            break;
        }
        half_width *= 2.0;
    }
    let (evaluated, step) = last.expect("at least one grid pass");
    let accepted: Vec<f64> = evaluated
        .iter()
        .filter(|(_, p)| *p >= alpha)
        .map(|(y, _)| *y)
        .collect();
    let edges_rejected = evaluated[0].1 < alpha && evaluated[g - 1].1 < alpha;
    if !edges_rejected {
        let hull = if accepted.is_empty() {
            (center, center)
        } else {
            (accepted[0] - step, accepted[accepted.len() - 1] + step)
        };
        return Err(ConformalError::UnboundedInterval { hull, alpha });
    }
    if accepted.is_empty() {
        return Err(ConformalError::EmptyAcceptedSet);
    }
    let hull = (accepted[0] - step, accepted[accepted.len() - 1] + step);
    Ok(ConformalResult {
        grid: evaluated,
        accepted_hull: hull,
        length: hull.1 - hull.0,
        alpha,
        x_new: x_new.to_vec(),
    })
}

/// Conformal interval per path penalty, in path order; `None` marks
/// penalties whose prediction set was unbounded.
pub fn lambda_length_profile(
    data: &Dataset,
    x_new: &[f64],
    alpha: f64,
    path: &LassoPath,
    grid: &GridSpec,
) -> Result<Vec<(f64, Option<ConformalResult>)>, ConformalError> {
    if path.is_empty() {
        return Err(ConformalError::EmptyPath);
    }
    let results: Vec<Result<ConformalResult, ConformalError>> =
        exec::map_slice(&path.lambdas, |&lambda| {
            conformal_interval(data, x_new, alpha, &PredictorSpec::Lasso { lambda }, grid)
        });
    let mut out = Vec::with_capacity(path.len());
    for (lambda, result) in path.lambdas.iter().zip(results) {
        match result {
            Ok(res) => out.push((*lambda, Some(res))),
            Err(ConformalError::UnboundedInterval { .. }) => out.push((*lambda, None)),
            Err(other) => return Err(other),
        }
    }
    Ok(out)
}

/// Shortest finite interval in a path profile; ties go to the larger
/// (sparser) penalty. Fails when every entry is unbounded.
pub fn choose_from_profile(
    profile: Vec<(f64, Option<ConformalResult>)>,
) -> Result<(f64, ConformalResult), ConformalError> {
    let mut best: Option<(f64, ConformalResult)> = None;
    for (lambda, result) in profile {
        if let Some(res) = result {
            // Profiles run from the largest penalty down, so strict
            // improvement keeps the larger penalty on ties.
            if best.as_ref().map_or(true, |(_, b)| res.length < b.length) {
                best = Some((lambda, res));
            }
        }
    }
    best.ok_or(ConformalError::NoFiniteInterval)
}

/// Picks the path penalty whose conformal interval at `x_new` is shortest;
/// ties go to the larger (sparser) penalty. Unbounded intervals are skipped;
/// if every penalty is unbounded the call fails.
pub fn choose_lambda_by_length(
    data: &Dataset,
    x_new: &[f64],
    alpha: f64,
    path: &LassoPath,
    grid: &GridSpec,
) -> Result<(f64, ConformalResult), ConformalError> {
    choose_from_profile(lambda_length_profile(data, x_new, alpha, path, grid)?)
}

/// Interval-length change from removing each variable of `subset` from a
/// least-squares conformal predictor: positive means removing it lengthens
/// the interval. Failures are tagged with the variable they came from.
pub fn variable_effect_lengths(
    data: &Dataset,
    x_new: &[f64],
    alpha: f64,
    subset: &[usize],
    grid: &GridSpec,
) -> Result<Vec<(usize, f64)>, ConformalError> {
    if subset.is_empty() {
        return Err(ConformalError::EmptySubset);
    }
    let base = conformal_interval(
        data,
        x_new,
        alpha,
        &PredictorSpec::OlsSubset(subset.to_vec()),
        grid,
    )?;
    let deltas: Vec<Result<(usize, f64), ConformalError>> = exec::map_slice(subset, |&j| {
        let reduced: Vec<usize> = subset.iter().copied().filter(|&k| k != j).collect();
        conformal_interval(
            data,
            x_new,
            alpha,
            &PredictorSpec::OlsSubset(reduced),
            grid,
        )
        .map(|res| (j, res.length - base.length))
        .map_err(|e| ConformalError::VariableFit {
            variable: j,
            source: Box::new(e),
        })
    });
    deltas.into_iter().collect()
}
