//! Batch front end: ingest a CSV, run the split-sample inference pipeline,
//! conformal prediction, a bare selector, or the excess-risk bound, and
//! write TSV tables (plus an optional SVG interval plot).
//!
//! Exit codes: 0 success, 1 data error, 2 numerical failure, 3 bad flags.
//! `HARNESS_THREADS` caps the worker pool.

use clap::{Args, Parser, Subcommand, ValueEnum};
use harness_core::conformal::{self, GridSpec, PredictorSpec};
use harness_core::data::{self, DataError, Dataset};
use harness_core::harness::{self, CovEstimator, HarnessConfig, HarnessError, RiskScale};
use harness_core::plot::{interval_forest_svg, ForestPanel, ForestRow};
use harness_core::report;
use harness_core::riskbound::{self, BoundError, BoundInputs, DgpSpec};
use harness_core::selectors::{self, SelectorDiagnostics, SelectorError, SelectorSpec};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_DATA: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_FLAGS: u8 = 3;

#[derive(Parser)]
#[command(
    name = "harness",
    version,
    about = "Distribution-free regression inference after variable selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the data, select on one half, and report risk, inflation, and
    /// projected-parameter intervals from the other half
    Harness(HarnessArgs),
    /// Conformal prediction interval for a query point
    Conformal(ConformalArgs),
    /// Run a selector on the full dataset and write its trace
    Select(SelectArgs),
    /// Print the constrained-lasso excess-risk bound; optionally verify it
    /// by Monte Carlo
    Bound(BoundArgs),
}

#[derive(Args)]
struct IoArgs {
    /// Input CSV file (header row required)
    #[arg(long)]
    input: PathBuf,
    /// Name of the response column
    #[arg(long)]
    response: String,
    /// Directory for output artifacts
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum RiskScaleArg {
    Absolute,
    Squared,
}

impl From<RiskScaleArg> for RiskScale {
    fn from(v: RiskScaleArg) -> Self {
        match v {
            RiskScaleArg::Absolute => RiskScale::Absolute,
            RiskScaleArg::Squared => RiskScale::Squared,
        }
    }
}

#[derive(Args)]
struct SelectorArgs {
    /// Variable selector: stepwise or lasso
    #[arg(long, default_value = "stepwise")]
    selector: String,
    /// Penalty-path length for the lasso selector
    #[arg(long, default_value_t = 100)]
    k_lambdas: usize,
    /// Smallest path penalty as a fraction of lambda_max
    #[arg(long, default_value_t = 1e-3)]
    lambda_min_ratio: f64,
}

impl SelectorArgs {
    fn build(&self) -> Result<SelectorSpec, AppError> {
        let spec = SelectorSpec::parse(&self.selector)?;
        Ok(match spec {
            SelectorSpec::Lasso { rule, .. } => SelectorSpec::Lasso {
                k_lambdas: self.k_lambdas,
                lambda_min_ratio: self.lambda_min_ratio,
                rule,
            },
            other => other,
        })
    }
}

#[derive(Args)]
struct HarnessArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    selector: SelectorArgs,
    /// Report uncorrected per-variable intervals
    #[arg(long)]
    no_bonferroni: bool,
    /// Loss scale for risk-type quantities
    #[arg(long, value_enum, default_value_t = RiskScaleArg::Absolute)]
    risk_scale: RiskScaleArg,
    /// Refit the selected coefficients on the inference half
    #[arg(long)]
    refit_d2: bool,
    /// Classical instead of heteroskedasticity-robust coefficient covariance
    #[arg(long)]
    classical_covariance: bool,
    /// Also write intervals.svg (two interval-forest panels)
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct ConformalArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Query point as comma-separated values, e.g. --x-new "1.5,0,2"
    #[arg(long, conflicts_with = "x_new_file")]
    x_new: Option<String>,
    /// Query point as a one-row CSV file
    #[arg(long)]
    x_new_file: Option<PathBuf>,
    /// Residual predictor: ols, intercept, subset, or lasso
    #[arg(long, default_value = "ols")]
    predictor: String,
    /// Columns (names or indices) for the subset predictor
    #[arg(long)]
    subset: Option<String>,
    /// Penalty for the lasso predictor
    #[arg(long)]
    lambda: Option<f64>,
    /// Grid resolution for inverting the p-value function
    #[arg(long, default_value_t = 1000)]
    grid_points: usize,
    /// Half-width doublings before the set is declared unbounded
    #[arg(long, default_value_t = 10)]
    max_doublings: usize,
    /// Choose the lasso penalty by shortest interval over a path, then
    /// report that interval; writes lambda_choice.tsv
    #[arg(long)]
    lambda_path: bool,
    /// Penalty-path length for --lambda-path
    #[arg(long, default_value_t = 20)]
    k_lambdas: usize,
    /// Smallest path penalty as a fraction of lambda_max
    #[arg(long, default_value_t = 1e-3)]
    lambda_min_ratio: f64,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    selector: SelectorArgs,
}

#[derive(Args)]
struct BoundArgs {
    /// Uniform bound on |X_j| and |Y|
    #[arg(long = "C", default_value_t = 1.0)]
    c_max: f64,
    /// l1 budget of the constrained fit
    #[arg(long = "L", default_value_t = 1.0)]
    l1_budget: f64,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Verify the bound by Monte Carlo and write boundcheck.tsv
    #[arg(long)]
    verify: bool,
    /// Data-generating process for verification
    #[arg(long, default_value = "bounded-sign")]
    dgp: String,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for output artifacts
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Application failure with its exit classification.
struct AppError {
    code: u8,
    message: String,
}

impl AppError {
    fn flags(message: impl Into<String>) -> Self {
        AppError {
            code: EXIT_FLAGS,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        AppError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<DataError> for AppError {
    fn from(e: DataError) -> Self {
        AppError {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

impl From<SelectorError> for AppError {
    fn from(e: SelectorError) -> Self {
        let code = match &e {
            SelectorError::UnknownSelector(_) | SelectorError::InvalidParameter(_) => EXIT_FLAGS,
            _ => EXIT_NUMERIC,
        };
        AppError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<HarnessError> for AppError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidAlpha(_) => AppError::flags(e.to_string()),
            HarnessError::Split(inner) => inner.into(),
            HarnessError::Selection(inner) => {
                let mut err: AppError = inner.into();
                err.message = format!("selection stage failed: {}", err.message);
                err
            }
            other => AppError {
                code: EXIT_NUMERIC,
                message: other.to_string(),
            },
        }
    }
}

impl From<conformal::ConformalError> for AppError {
    fn from(e: conformal::ConformalError) -> Self {
        use conformal::ConformalError as CE;
        let code = match &e {
            CE::InvalidAlpha(_)
            | CE::GridTooCoarse(_)
            | CE::DimensionMismatch { .. }
            | CE::InvalidSubset(_)
            | CE::EmptyPath
            | CE::EmptySubset => EXIT_FLAGS,
            _ => EXIT_NUMERIC,
        };
        AppError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<BoundError> for AppError {
    fn from(e: BoundError) -> Self {
        let code = match &e {
            BoundError::InvalidInputs(_) | BoundError::TooFewReps(_) | BoundError::UnknownDgp(_) => {
                EXIT_FLAGS
            }
            _ => EXIT_NUMERIC,
        };
        AppError {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("harness: error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

fn run() -> Result<(), AppError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            return Err(AppError::flags(e.to_string()));
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return Ok(());
        }
    };
    configure_threads_from_env()?;
    match cli.command {
        Command::Harness(args) => cmd_harness(args),
        Command::Conformal(args) => cmd_conformal(args),
        Command::Select(args) => cmd_select(args),
        Command::Bound(args) => cmd_bound(args),
    }
}

fn configure_threads_from_env() -> Result<(), AppError> {
    if let Ok(raw) = std::env::var("HARNESS_THREADS") {
        let n: usize = raw
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| {
                AppError::flags(format!(
                    "HARNESS_THREADS must be a positive integer, got {raw:?}"
                ))
            })?;
        harness_core::exec::configure_threads(n)
            .map_err(|e| AppError::flags(format!("cannot configure {n} worker threads: {e}")))?;
    }
    Ok(())
}

fn write_artifact(
    dir: &Path,
    name: &str,
    write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<(), AppError> {
    fs::create_dir_all(dir)
        .map_err(|e| AppError::data(format!("cannot create output directory: {e}")))?;
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| AppError::data(format!("cannot render {name}: {e}")))?;
    let path = dir.join(name);
    fs::write(&path, &buf)
        .map_err(|e| AppError::data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn load_input(io: &IoArgs) -> Result<Dataset, AppError> {
    Ok(data::load_csv(&io.input, &io.response)?)
}

fn cmd_harness(args: HarnessArgs) -> Result<(), AppError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(AppError::flags(format!(
            "--alpha must lie in (0,1), got {}",
            args.alpha
        )));
    }
    let dataset = load_input(&args.io)?;
    let config = HarnessConfig {
        alpha: args.alpha,
        seed: args.seed,
        selector: args.selector.build()?,
        bonferroni: !args.no_bonferroni,
        scale: args.risk_scale.into(),
        refit_on_d2: args.refit_d2,
        standardize: true,
        covariance: if args.classical_covariance {
            CovEstimator::Classical
        } else {
            CovEstimator::RobustSandwich
        },
    };
    let output = harness::run_harness(&dataset, &config)?;
    let names = dataset.names();
    let out = &args.io.out;

    write_artifact(out, "selection.tsv", |w| {
        report::write_selection_tsv(w, &output.model, names)
    })?;
    match &output.model.diagnostics {
        SelectorDiagnostics::Stepwise(trace) => {
            write_artifact(out, "cp_trace.tsv", |w| {
                report::write_cp_trace_tsv(w, trace, names)
            })?;
        }
        SelectorDiagnostics::Lasso(diag) => {
            write_artifact(out, "lasso_path.tsv", |w| {
                report::write_lasso_path_tsv(w, &diag.path)
            })?;
        }
        _ => {}
    }
    write_artifact(out, "risk.tsv", |w| {
        report::write_interval_tsv(w, &[&output.risk.risk, &output.risk.null_risk])
    })?;
    let inflation_rows: Vec<&harness::IntervalReport> = output
        .inflation
        .iter()
        .flat_map(|inf| inf.per_variable.iter().map(|(_, r)| r))
        .collect();
    write_artifact(out, "inflation.tsv", |w| {
        report::write_interval_tsv(w, &inflation_rows)
    })?;
    let projected_rows: Vec<&harness::IntervalReport> =
        output.projected.intervals.iter().collect();
    write_artifact(out, "projected.tsv", |w| {
        report::write_interval_tsv(w, &projected_rows)
    })?;

    if args.plot {
        let left = ForestPanel {
            title: "risk inflation".to_string(),
            rows: inflation_rows.iter().map(|r| ForestRow::from(*r)).collect(),
        };
        // Mirror the interval table minus the intercept row.
        let right = ForestPanel {
            title: "projected parameters".to_string(),
            rows: output
                .projected
                .intervals
                .iter()
                .skip(1)
                .map(ForestRow::from)
                .collect(),
        };
        write_artifact(out, "intervals.svg", |w| {
            w.write_all(interval_forest_svg(&[left, right]).as_bytes())
        })?;
    }
    println!(
        "selected {} of {} variables; risk {} in [{}, {}]",
        output.model.subset.len(),
        dataset.p(),
        report::fmt_sig12(output.risk.risk.estimate),
        report::fmt_sig12(output.risk.risk.lower),
        report::fmt_sig12(output.risk.risk.upper),
    );
    Ok(())
}

fn parse_x_new(args: &ConformalArgs, p: usize) -> Result<Vec<f64>, AppError> {
    let raw = if let Some(inline) = &args.x_new {
        inline.clone()
    } else if let Some(path) = &args.x_new_file {
        let contents = fs::read_to_string(path)
            .map_err(|e| AppError::data(format!("cannot read {}: {e}", path.display())))?;
        let lines: Vec<&str> = contents.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(AppError::data("query-point file is empty".to_string()));
        }
        // A header line is allowed; the values sit on the last line.
        lines[lines.len() - 1].to_string()
    } else {
        return Err(AppError::flags(
            "supply the query point with --x-new or --x-new-file",
        ));
    };
    let values: Result<Vec<f64>, _> = raw.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values =
        values.map_err(|_| AppError::flags(format!("query point is not numeric: {raw:?}")))?;
    if values.len() != p {
        return Err(AppError::flags(format!(
            "query point has {} coordinates, data has p={p}",
            values.len()
        )));
    }
    Ok(values)
}

fn parse_subset(raw: &str, dataset: &Dataset) -> Result<Vec<usize>, AppError> {
    let mut subset = Vec::new();
    for token in raw.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let j = if let Ok(idx) = token.parse::<usize>() {
            idx
        } else {
            dataset
                .names()
                .iter()
                .position(|n| n == token)
                .ok_or_else(|| AppError::flags(format!("unknown column {token:?}")))?
        };
        if j >= dataset.p() {
            return Err(AppError::flags(format!("column index {j} out of range")));
        }
        if !subset.contains(&j) {
            subset.push(j);
        }
    }
    Ok(subset)
}

fn cmd_conformal(args: ConformalArgs) -> Result<(), AppError> {
    let dataset = load_input(&args.io)?;
    let x_new = parse_x_new(&args, dataset.p())?;
    let grid = GridSpec {
        points: args.grid_points,
        max_doublings: args.max_doublings,
    };
    let out = &args.io.out;

    let result = if args.lambda_path {
        // The lasso residual model standardizes internally, so the path is
        // built on standardized data to put its penalty grid on that scale.
        let (std_data, _, record) = data::standardize(&dataset, &dataset)?;
        let x_new_std: Vec<f64> = x_new
            .iter()
            .enumerate()
            .map(|(j, v)| (v - record.means[j]) / record.scales[j])
            .collect();
        let path = selectors::lasso_path(&std_data, args.k_lambdas, args.lambda_min_ratio)?;
        let profile =
            conformal::lambda_length_profile(&std_data, &x_new_std, args.alpha, &path, &grid)?;
        let rows: Vec<(f64, Option<(f64, f64, f64)>)> = profile
            .iter()
            .map(|(l, r)| {
                (
                    *l,
                    r.as_ref()
                        .map(|res| (res.accepted_hull.0, res.accepted_hull.1, res.length)),
                )
            })
            .collect();
        let (lambda, result) = conformal::choose_from_profile(profile)?;
        write_artifact(out, "lambda_choice.tsv", |w| {
            report::write_lambda_choice_tsv(w, &rows, lambda)
        })?;
        result
    } else {
        let predictor = match args.predictor.as_str() {
            "ols" => PredictorSpec::OlsFull,
            "intercept" => PredictorSpec::OlsSubset(Vec::new()),
            "subset" => {
                let raw = args.subset.as_deref().ok_or_else(|| {
                    AppError::flags("--predictor subset requires --subset".to_string())
                })?;
                PredictorSpec::OlsSubset(parse_subset(raw, &dataset)?)
            }
            "lasso" => {
                let lambda = args.lambda.ok_or_else(|| {
                    AppError::flags("--predictor lasso requires --lambda".to_string())
                })?;
                PredictorSpec::Lasso { lambda }
            }
            other => {
                return Err(AppError::flags(format!(
                    "unknown predictor {other:?}; use ols, intercept, subset, or lasso"
                )))
            }
        };
        conformal::conformal_interval(&dataset, &x_new, args.alpha, &predictor, &grid)?
    };

    write_artifact(out, "pvalues.tsv", |w| {
        report::write_conformal_grid_tsv(w, &result)
    })?;
    write_artifact(out, "interval.tsv", |w| {
        report::write_conformal_summary_tsv(w, &result)
    })?;
    println!(
        "interval [{}, {}] length {}",
        report::fmt_sig12(result.accepted_hull.0),
        report::fmt_sig12(result.accepted_hull.1),
        report::fmt_sig12(result.length),
    );
    Ok(())
}

fn cmd_select(args: SelectArgs) -> Result<(), AppError> {
    let raw = load_input(&args.io)?;
    // Selectors operate on standardized predictors, as in the pipeline;
    // reported coefficients are on the standardized scale.
    let (dataset, _, _) = data::standardize(&raw, &raw)?;
    let spec = args.selector.build()?;
    let model = selectors::select(&dataset, &spec)?;
    let out = &args.io.out;
    write_artifact(out, "selection.tsv", |w| {
        report::write_selection_tsv(w, &model, dataset.names())
    })?;
    match &model.diagnostics {
        SelectorDiagnostics::Stepwise(trace) => {
            write_artifact(out, "cp_trace.tsv", |w| {
                report::write_cp_trace_tsv(w, trace, dataset.names())
            })?;
        }
        SelectorDiagnostics::Lasso(diag) => {
            write_artifact(out, "lasso_path.tsv", |w| {
                report::write_lasso_path_tsv(w, &diag.path)
            })?;
        }
        _ => {}
    }
    println!(
        "selected {} of {} variables with {}",
        model.subset.len(),
        dataset.p(),
        model.selector_id
    );
    Ok(())
}

fn cmd_bound(args: BoundArgs) -> Result<(), AppError> {
    let inputs = BoundInputs {
        c_max: args.c_max,
        l1_budget: args.l1_budget,
        n: args.n,
        p: args.p,
        delta: args.delta,
    };
    let bound = riskbound::excess_risk_bound(&inputs)?;
    println!("{}", report::fmt_sig12(bound));
    if args.verify {
        let dgp = DgpSpec::parse(&args.dgp)?;
        let check = riskbound::verify_bound(&dgp, &inputs, args.reps, args.seed)?;
        write_artifact(&args.out, "boundcheck.tsv", |w| {
            report::write_boundcheck_tsv(w, &check, dgp.label())
        })?;
        println!(
            "violation rate {} over {} reps (oracle risk {})",
            report::fmt_sig12(check.violation_rate),
            check.reps,
            report::fmt_sig12(check.oracle_risk),
        );
    }
    Ok(())
}
