//! Closed-form excess-risk bound for the l1-constrained lasso with bounded
//! variables, and a Monte Carlo verifier that the bound holds with its
//! advertised probability.
//!
//! The guarantee: with every variable bounded by `C`, the constrained fit
//! over the l1 ball of radius `L` has predictive risk within
//! `sqrt((8 C^2 L^4 / n) * ln(2 p^2 / delta))` of the best predictor in the
//! ball, except with probability at most `delta`. Everything here is on the
//! squared-error scale with no intercept.

use crate::data::Dataset;
use crate::exec;
use crate::selectors::{lasso_constrained, SelectorError};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("invalid bound inputs: {0}")]
    InvalidInputs(String),
    #[error("verification needs at least 100 reps, got {0}")]
    TooFewReps(usize),
    #[error("unknown data-generating process {0:?}")]
    UnknownDgp(String),
    #[error("dgp emitted an out-of-bound value at rep {rep}: {detail}")]
    OutOfBounds { rep: usize, detail: String },
    #[error("rep {rep} solver failure: {source}")]
    Rep {
        rep: usize,
        #[source]
        source: SelectorError,
    },
    #[error("oracle projected-gradient search did not converge")]
    OracleNonConvergence,
}

/// Inputs to the excess-risk bound.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    /// Uniform bound on |X_j| and |Y|.
    pub c_max: f64,
    /// Radius of the l1 ball the fit is constrained to.
    pub l1_budget: f64,
    pub n: usize,
    pub p: usize,
    /// Failure probability; the bound holds except on a set of this mass.
    pub delta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<(), BoundError> {
        if !(self.c_max.is_finite() && self.c_max > 0.0) {
            return Err(BoundError::InvalidInputs(format!(
                "c_max must be positive, got {}",
                self.c_max
            )));
        }
        if !(self.l1_budget.is_finite() && self.l1_budget > 0.0) {
            return Err(BoundError::InvalidInputs(format!(
                "l1_budget must be positive, got {}",
                self.l1_budget
            )));
        }
        if self.n == 0 || self.p == 0 {
            return Err(BoundError::InvalidInputs(format!(
                "n and p must be at least 1, got n={}, p={}",
                self.n, self.p
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BoundError::InvalidInputs(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// The excess-risk term `sqrt((8 C^2 L^4 / n) * ln(2 p^2 / delta))`,
/// evaluated exactly with no slack.
pub fn excess_risk_bound(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    let c2 = inputs.c_max * inputs.c_max;
    let l2 = inputs.l1_budget * inputs.l1_budget;
    let log_term = (2.0 * (inputs.p as f64) * (inputs.p as f64) / inputs.delta).ln();
    Ok((8.0 * c2 * l2 * l2 / inputs.n as f64 * log_term).sqrt())
}

/// Bounded data-generating processes for the verifier. Predictors are iid
/// Uniform(-C, C); responses never leave [-C, C].
#[derive(Debug, Clone)]
pub enum DgpSpec {
    /// `y = clamp(theta . x + noise_sd * eps, -C, C)`; `theta` is padded
    /// with zeros or truncated to the dimension at hand.
    BoundedLinear { theta: Vec<f64>, noise_sd: f64 },
    /// `y = C * sign(x_1)`: discontinuous, far from linear.
    BoundedSign,
    /// `y = C * sin(3 x_1 / C)`: smooth nonlinearity.
    BoundedSine,
}

impl DgpSpec {
    /// Named processes for configuration files and the command line.
    pub fn parse(name: &str) -> Result<Self, BoundError> {
        match name {
            "bounded-linear" => Ok(DgpSpec::BoundedLinear {
                theta: vec![0.5, 0.3],
                noise_sd: 0.1,
            }),
            "bounded-sign" => Ok(DgpSpec::BoundedSign),
            "bounded-sine" => Ok(DgpSpec::BoundedSine),
            other => Err(BoundError::UnknownDgp(other.to_string())),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DgpSpec::BoundedLinear { .. } => "bounded-linear",
            DgpSpec::BoundedSign => "bounded-sign",
            DgpSpec::BoundedSine => "bounded-sine",
        }
    }

    fn draw_row(&self, c: f64, p: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-c..c)).collect();
        let y = match self {
            DgpSpec::BoundedLinear { theta, noise_sd } => {
                let mut v: f64 = theta
                    .iter()
                    .zip(x.iter())
                    .map(|(t, xi)| t * xi)
                    .sum();
                if *noise_sd > 0.0 {
                    let normal = Normal::new(0.0, *noise_sd).expect("positive sd");
                    v += normal.sample(rng);
                }
                v.clamp(-c, c)
            }
            DgpSpec::BoundedSign => {
                let s = x[0].signum();
                c * if s == 0.0 { 0.0 } else { s }
            }
            DgpSpec::BoundedSine => c * (3.0 * x[0] / c).sin(),
        };
        (x, y)
    }
}

/// Result of a bound verification run.
#[derive(Debug, Clone)]
pub struct BoundCheckReport {
    pub bound_value: f64,
    /// Fraction of reps where the fitted risk exceeded the oracle risk plus
    /// the bound.
    pub violation_rate: f64,
    pub reps: usize,
    /// Holdout points behind both risk estimates.
    pub holdout_size: usize,
    /// Estimated risk of the best predictor in the ball.
    pub oracle_risk: f64,
    /// Average estimated risk of the fitted predictors.
    pub mean_fitted_risk: f64,
}

const HOLDOUT_SIZE: usize = 50_000;

/// Sufficient statistics of a holdout sample for squared-error risk:
/// `risk(beta) = yy - 2 beta.xty + beta' gram beta` (all scaled by 1/N).
pub(crate) struct HoldoutRisk {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yy: f64,
}

impl HoldoutRisk {
    pub(crate) fn risk(&self, beta: &DVector<f64>) -> f64 {
        self.yy - 2.0 * beta.dot(&self.xty) + (beta.transpose() * &self.gram * beta)[(0, 0)]
    }
}

fn check_bounds(x: &[f64], y: f64, c: f64, rep: usize) -> Result<(), BoundError> {
    let limit = c * (1.0 + 1e-12);
    if let Some(v) = x.iter().find(|v| v.abs() > limit) {
        return Err(BoundError::OutOfBounds {
            rep,
            detail: format!("|x|={} exceeds C={c}", v.abs()),
        });
    }
    if y.abs() > limit {
        return Err(BoundError::OutOfBounds {
            rep,
            detail: format!("|y|={} exceeds C={c}", y.abs()),
        });
    }
    Ok(())
}

pub(crate) fn build_holdout(
    dgp: &DgpSpec,
    c: f64,
    p: usize,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<HoldoutRisk, BoundError> {
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut yy = 0.0;
    let mut xi = DVector::<f64>::zeros(p);
    for _ in 0..size {
        let (x, y) = dgp.draw_row(c, p, rng);
        check_bounds(&x, y, c, 0)?;
        for (j, v) in x.iter().enumerate() {
            xi[j] = *v;
        }
        gram.ger(1.0, &xi, &xi, 1.0);
        xty.axpy(y, &xi, 1.0);
        yy += y * y;
    }
    let scale = 1.0 / size as f64;
    gram *= scale;
    xty *= scale;
    yy *= scale;
    Ok(HoldoutRisk { gram, xty, yy })
}

/// Euclidean projection onto the l1 ball of radius `budget`.
pub(crate) fn project_l1(v: &DVector<f64>, budget: f64) -> DVector<f64> {
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= budget {
        return v.clone();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (i, &u) in mags.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - budget) / (i + 1) as f64;
        if u > t {
            threshold = t;
        }
    }
    v.map(|x| x.signum() * (x.abs() - threshold).max(0.0))
}

/// Minimizes the holdout risk over the l1 ball by projected gradient
/// descent, stopping when no coefficient moves more than `tol`.
pub(crate) fn projected_gradient_min(
    holdout: &HoldoutRisk,
    budget: f64,
    tol: f64,
) -> Result<DVector<f64>, BoundError> {
    let p = holdout.gram.nrows();
    // Lipschitz constant of the gradient from the top eigenvalue.
    let mut v = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    let mut top = 0.0;
    for _ in 0..100 {
        let w = &holdout.gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        top = norm;
        v = w / norm;
    }
    let step = 1.0 / (2.0 * top).max(1e-12);
    let mut beta = DVector::<f64>::zeros(p);
    for _ in 0..200_000 {
        let grad = 2.0 * (&holdout.gram * &beta - &holdout.xty);
        let next = project_l1(&(&beta - step * grad), budget);
        let change = (&next - &beta).amax();
        beta = next;
        if change < tol {
            return Ok(beta);
        }
    }
    Err(BoundError::OracleNonConvergence)
}

/// Monte Carlo check of the oracle inequality. Per rep: draw `n` training
/// pairs from the process, fit the constrained lasso with budget `L`, and
/// estimate its risk on a 50,000-point holdout shared across reps; the best
/// in-ball predictor is estimated once by projected gradient on the same
/// holdout. Deterministic given `(dgp, inputs, reps, seed)` and independent
/// of worker count.
pub fn verify_bound(
    dgp: &DgpSpec,
    inputs: &BoundInputs,
    reps: usize,
    seed: u64,
) -> Result<BoundCheckReport, BoundError> {
    inputs.validate()?;
    if reps < 100 {
        return Err(BoundError::TooFewReps(reps));
    }
    let bound_value = excess_risk_bound(inputs)?;
    let (c, p, n, budget) = (inputs.c_max, inputs.p, inputs.n, inputs.l1_budget);

    let mut holdout_rng = ChaCha8Rng::seed_from_u64(seed);
    holdout_rng.set_stream(0);
    let holdout = build_holdout(dgp, c, p, HOLDOUT_SIZE, &mut holdout_rng)?;
    let beta_star = projected_gradient_min(&holdout, budget, 1e-6)?;
    let oracle_risk = holdout.risk(&beta_star);

    let names: Vec<String> = (0..p).map(|j| format!("x{}", j + 1)).collect();
    let per_rep: Vec<Result<f64, BoundError>> = exec::map_range(reps, |rep| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64 + 1);
        let mut xs = Vec::with_capacity(n * p);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let (x, y) = dgp.draw_row(c, p, &mut rng);
            check_bounds(&x, y, c, rep)?;
            xs.extend_from_slice(&x);
            ys.push(y);
        }
        let data = Dataset::new(
            DMatrix::from_row_slice(n, p, &xs),
            DVector::from_vec(ys),
            names.clone(),
        )
        .expect("generated data is finite and well-shaped");
        let model =
            lasso_constrained(&data, budget).map_err(|source| BoundError::Rep { rep, source })?;
        Ok(holdout.risk(&model.beta_hat))
    });

    let mut violations = 0usize;
    let mut risk_sum = 0.0;
    for r in per_rep {
        let fitted_risk = r?;
        risk_sum += fitted_risk;
        if fitted_risk > oracle_risk + bound_value {
            violations += 1;
        }
    }
    Ok(BoundCheckReport {
        bound_value,
        violation_rate: violations as f64 / reps as f64,
        reps,
        holdout_size: HOLDOUT_SIZE,
        oracle_risk,
        mean_fitted_risk: risk_sum / reps as f64,
    })
}
