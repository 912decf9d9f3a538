//! TSV serialization of reports and traces.
//!
//! Numbers are printed with 12 significant digits in scientific notation,
//! which is locale-independent, diff-friendly, and round-trips: parsing a
//! printed value and reprinting it reproduces the same bytes.

use crate::conformal::ConformalResult;
use crate::harness::{Correction, IntervalReport};
use crate::riskbound::BoundCheckReport;
use crate::selectors::{CpTrace, LassoPath, SelectedModel};
use std::io::{self, Write};

/// Fixed 12-significant-digit rendering used in every TSV cell.
pub fn fmt_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

fn fmt_correction(c: &Correction) -> String {
    match c {
        Correction::None => "none".to_string(),
        Correction::Bonferroni(k) => format!("bonferroni({k})"),
    }
}

pub const INTERVAL_HEADER: &str = "label\testimate\tlower\tupper\tlevel\tcorrection";

/// Writes interval rows under the standard header.
pub fn write_interval_tsv<W: Write>(w: &mut W, rows: &[&IntervalReport]) -> io::Result<()> {
    writeln!(w, "{INTERVAL_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.label,
            fmt_sig12(r.estimate),
            fmt_sig12(r.lower),
            fmt_sig12(r.upper),
            fmt_sig12(r.level),
            fmt_correction(&r.correction)
        )?;
    }
    Ok(())
}

/// A parsed interval row; estimates carry the full printed precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedInterval {
    pub label: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub correction: String,
}

/// Parses the output of [`write_interval_tsv`].
pub fn parse_interval_tsv(contents: &str) -> Result<Vec<ParsedInterval>, String> {
    let mut lines = contents.lines();
    match lines.next() {
        Some(h) if h == INTERVAL_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(format!("row {}: expected 6 fields, got {}", i + 1, fields.len()));
        }
        let num = |s: &str| -> Result<f64, String> {
            s.parse().map_err(|_| format!("row {}: bad number {s:?}", i + 1))
        };
        out.push(ParsedInterval {
            label: fields[0].to_string(),
            estimate: num(fields[1])?,
            lower: num(fields[2])?,
            upper: num(fields[3])?,
            level: num(fields[4])?,
            correction: fields[5].to_string(),
        });
    }
    Ok(out)
}

/// Selected subset and coefficients, intercept row first.
pub fn write_selection_tsv<W: Write>(
    w: &mut W,
    model: &SelectedModel,
    names: &[String],
) -> io::Result<()> {
    writeln!(w, "term\tcolumn\testimate\tselector")?;
    writeln!(
        w,
        "(intercept)\t\t{}\t{}",
        fmt_sig12(model.intercept),
        model.selector_id
    )?;
    for &j in &model.subset {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            names[j],
            j,
            fmt_sig12(model.beta_hat[j]),
            model.selector_id
        )?;
    }
    Ok(())
}

/// Greedy-search trace: one row per model size.
pub fn write_cp_trace_tsv<W: Write>(
    w: &mut W,
    trace: &CpTrace,
    names: &[String],
) -> io::Result<()> {
    writeln!(w, "size\tadded_column\tadded_name\trss\tcp\tsigma2_hat")?;
    for i in 0..trace.sizes.len() {
        let (col, name) = match trace.added[i] {
            Some(j) => (j.to_string(), names[j].clone()),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            trace.sizes[i],
            col,
            name,
            fmt_sig12(trace.rss[i]),
            fmt_sig12(trace.cp[i]),
            fmt_sig12(trace.sigma2_hat)
        )?;
    }
    Ok(())
}

/// Penalty path summary: one row per grid point.
pub fn write_lasso_path_tsv<W: Write>(w: &mut W, path: &LassoPath) -> io::Result<()> {
    writeln!(w, "index\tlambda\tl1_norm\tnonzero\tintercept")?;
    for k in 0..path.len() {
        let nnz = path.betas[k].iter().filter(|b| **b != 0.0).count();
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            k,
            fmt_sig12(path.lambdas[k]),
            fmt_sig12(path.l1_norms[k]),
            nnz,
            fmt_sig12(path.intercepts[k])
        )?;
    }
    Ok(())
}

/// Evaluated conformity grid, one `(y, p)` row per grid point.
pub fn write_conformal_grid_tsv<W: Write>(w: &mut W, result: &ConformalResult) -> io::Result<()> {
    writeln!(w, "y\tp_value")?;
    for (y, p) in &result.grid {
        writeln!(w, "{}\t{}", fmt_sig12(*y), fmt_sig12(*p))?;
    }
    Ok(())
}

/// One-row interval summary for a conformal result.
pub fn write_conformal_summary_tsv<W: Write>(
    w: &mut W,
    result: &ConformalResult,
) -> io::Result<()> {
    writeln!(w, "lower\tupper\tlength\talpha")?;
    writeln!(
        w,
        "{}\t{}\t{}\t{}",
        fmt_sig12(result.accepted_hull.0),
        fmt_sig12(result.accepted_hull.1),
        fmt_sig12(result.length),
        fmt_sig12(result.alpha)
    )?;
    Ok(())
}

/// Per-penalty interval lengths from a path search; `None` marks penalties
/// whose prediction set was unbounded.
pub fn write_lambda_choice_tsv<W: Write>(
    w: &mut W,
    profile: &[(f64, Option<(f64, f64, f64)>)],
    chosen: f64,
) -> io::Result<()> {
    writeln!(w, "lambda\tlower\tupper\tlength\tchosen")?;
    for (lambda, entry) in profile {
        let flag = if *lambda == chosen { 1 } else { 0 };
        match entry {
            Some((lo, hi, len)) => writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                fmt_sig12(*lambda),
                fmt_sig12(*lo),
                fmt_sig12(*hi),
                fmt_sig12(*len),
                flag
            )?,
            None => writeln!(
                w,
                "{}\tunbounded\tunbounded\tunbounded\t{}",
                fmt_sig12(*lambda),
                flag
            )?,
        }
    }
    Ok(())
}

/// One-row bound verification summary.
pub fn write_boundcheck_tsv<W: Write>(
    w: &mut W,
    report: &BoundCheckReport,
    dgp: &str,
) -> io::Result<()> {
    writeln!(
        w,
        "dgp\tbound_value\tviolation_rate\treps\tholdout_size\toracle_risk\tmean_fitted_risk"
    )?;
    writeln!(
        w,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
        dgp,
        fmt_sig12(report.bound_value),
        fmt_sig12(report.violation_rate),
        report.reps,
        report.holdout_size,
        fmt_sig12(report.oracle_risk),
        fmt_sig12(report.mean_fitted_risk)
    )?;
    Ok(())
}
