//! Distribution-free regression inference after variable selection.
//!
//! The library is organized around a split-sample workflow: select a model on
//! one half of the data, then use the other half for inference that stays
//! valid without assuming the linear model is true. It provides
//!
//! - [`data`]: CSV ingestion, validation, train-half standardization, and
//!   seeded random splitting;
//! - [`selectors`]: forward stepwise selection with a Cp stopping rule,
//!   penalized lasso over a regularization path, and the l1-ball constrained
//!   lasso;
//! - [`harness`]: split-sample estimates and confidence intervals for the
//!   predictive risk of a selected model, the per-variable risk inflation
//!   from dropping a coefficient, and the projected (best linear) parameters;
//! - [`conformal`]: full conformal prediction intervals from augmented-fit
//!   permutation p-values, with finite-sample coverage for exchangeable data;
//! - [`riskbound`]: the closed-form excess-risk bound for the constrained
//!   lasso and a Monte Carlo verifier of the bound's advertised probability;
//! - [`report`] and [`plot`]: TSV serialization and an SVG interval-forest
//!   plot of the resulting interval families.
//!
//! All operations are deterministic functions of their inputs and an explicit
//! seed. With the `parallel` feature (on by default) the embarrassingly
//! parallel inner loops run on rayon; outputs are bitwise identical to the
//! sequential build regardless of worker count.

pub mod conformal;
pub mod data;
pub mod exec;
pub mod harness;
pub mod plot;
pub mod report;
pub mod riskbound;
pub mod selectors;
pub mod stats;

mod linalg;

pub use data::{load_csv, split, standardize, DataError, Dataset, SplitPair, StandardizationRecord};
pub use harness::{
    median_risk_interval, projected_params, risk_inflation, risk_interval, run_harness,
    Correction, CovEstimator, HarnessConfig, HarnessError, HarnessOutput, InflationReport,
    IntervalMethod, IntervalReport, ProjectedReport, RiskReport, RiskScale,
};
pub use selectors::{
    forward_stepwise, lasso_constrained, lasso_path, select, CpTrace, LassoPath, SelectedModel,
    SelectorError, SelectorSpec,
};

pub use conformal::{
    choose_lambda_by_length, conformal_interval, conformal_pvalue, variable_effect_lengths,
    ConformalError, ConformalResult, GridSpec, PredictorSpec,
};
pub use riskbound::{
    excess_risk_bound, verify_bound, BoundCheckReport, BoundError, BoundInputs, DgpSpec,
};
