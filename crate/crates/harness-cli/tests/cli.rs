//! Exit-code contracts and artifact checks for the command-line front end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn harness_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_harness"))
}

fn run(args: &[&str]) -> Output {
    harness_bin().args(args).output().expect("binary runs")
}

fn write_fixture(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path.display().to_string()
}

/// 24-row fixture with a strong linear signal in x1.
fn signal_csv() -> String {
    let mut s = String::from("x1,x2,y\n");
    for i in 0..24 {
        let x1 = (i as f64) / 4.0 - 3.0;
        let x2 = ((i * 7 + 3) % 11) as f64 / 5.0 - 1.0;
        let y = 2.0 * x1 + 0.25 * x2 + if i % 2 == 0 { 0.1 } else { -0.1 };
        s.push_str(&format!("{x1},{x2},{y}\n"));
    }
    s
}

#[test]
fn missing_input_file_exits_1() {
    let out = run(&[
        "harness",
        "--input",
        "/nonexistent/data.csv",
        "--response",
        "y",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_selector_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path(), "d.csv", &signal_csv());
    let out = run(&[
        "harness",
        "--input",
        &input,
        "--response",
        "y",
        "--selector",
        "frobnicate",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("frobnicate"), "stderr: {msg}");
}

#[test]
fn bad_flag_values_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path(), "d.csv", &signal_csv());
    // alpha outside (0,1)
    let out = run(&[
        "harness",
        "--input",
        &input,
        "--response",
        "y",
        "--alpha",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(3));
    // delta outside (0,1)
    let out = run(&["bound", "--delta", "1.0"]);
    assert_eq!(out.status.code(), Some(3));
    // unparseable clap input
    let out = run(&["harness", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(3));
    // malformed query point
    let out = run(&[
        "conformal",
        "--input",
        &input,
        "--response",
        "y",
        "--x-new",
        "a,b",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn harness_writes_artifacts_and_headline() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path(), "d.csv", &signal_csv());
    let outdir = dir.path().join("out");
    let out = run(&[
        "harness",
        "--input",
        &input,
        "--response",
        "y",
        "--out",
        outdir.to_str().unwrap(),
        "--plot",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "selection.tsv",
        "cp_trace.tsv",
        "risk.tsv",
        "inflation.tsv",
        "projected.tsv",
        "intervals.svg",
    ] {
        assert!(outdir.join(f).exists(), "missing {f}");
    }
    let selection = fs::read_to_string(outdir.join("selection.tsv")).unwrap();
    assert!(selection.contains("x1"), "signal column selected: {selection}");
    let risk = fs::read_to_string(outdir.join("risk.tsv")).unwrap();
    assert!(risk.lines().count() >= 3);
}

#[test]
fn select_command_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path(), "d.csv", &signal_csv());
    let outdir = dir.path().join("sel");
    let out = run(&[
        "select",
        "--input",
        &input,
        "--response",
        "y",
        "--selector",
        "lasso",
        "--k-lambdas",
        "20",
        "--out",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(outdir.join("selection.tsv").exists());
    let path_tsv = fs::read_to_string(outdir.join("lasso_path.tsv")).unwrap();
    assert_eq!(path_tsv.lines().count(), 21); // header + 20 grid points
}

#[test]
fn conformal_unbounded_at_tiny_alpha_exits_2() {
    // n=20: p(y) >= 1/21 > 0.001 for every y, so the set never closes.
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x1,y\n");
    for i in 0..20 {
        csv.push_str(&format!("{},{}\n", i as f64 / 10.0, (i % 7) as f64 - 3.0));
    }
    let input = write_fixture(dir.path(), "d.csv", &csv);
    let out = run(&[
        "conformal",
        "--input",
        &input,
        "--response",
        "y",
        "--x-new",
        "0.5",
        "--alpha",
        "0.001",
        "--grid-points",
        "64",
        "--max-doublings",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("unbounded"), "stderr: {msg}");
}

#[test]
fn conformal_interval_matches_intercept_only_enumeration() {
    // Tiny fixture, intercept-only predictor: the augmented fit is the mean
    // of the five responses, so p(y) is computable from first principles.
    let dir = tempfile::tempdir().unwrap();
    let csv = "x1,y\n0.0,0.3\n1.0,-1.2\n2.0,0.8\n3.0,2.1\n";
    let input = write_fixture(dir.path(), "d.csv", csv);
    let outdir = dir.path().join("conf");
    let out = run(&[
        "conformal",
        "--input",
        &input,
        "--response",
        "y",
        "--x-new",
        "1.5",
        "--predictor",
        "intercept",
        "--alpha",
        "0.35",
        "--grid-points",
        "200",
        "--out",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ys = [0.3_f64, -1.2, 0.8, 2.1];
    let pvalues = fs::read_to_string(outdir.join("pvalues.tsv")).unwrap();
    let mut accepted: Vec<f64> = Vec::new();
    let mut step = 0.0;
    let mut prev: Option<f64> = None;
    for line in pvalues.lines().skip(1) {
        let mut it = line.split('\t');
        let y: f64 = it.next().unwrap().parse().unwrap();
        let p: f64 = it.next().unwrap().parse().unwrap();
        // Enumeration oracle.
        let mean = (ys.iter().sum::<f64>() + y) / 5.0;
        let trial = (y - mean).abs();
        let count = ys
            .iter()
            .map(|v| (v - mean).abs())
            .filter(|e| *e >= trial)
            .count()
            + 1;
        assert_eq!(p, count as f64 / 5.0, "p mismatch at y={y}");
        if p >= 0.35 {
            accepted.push(y);
        }
        if let Some(prev) = prev {
            step = y - prev;
        }
        prev = Some(y);
    }
    let interval = fs::read_to_string(outdir.join("interval.tsv")).unwrap();
    let row: Vec<f64> = interval
        .lines()
        .nth(1)
        .unwrap()
        .split('\t')
        .map(|v| v.parse().unwrap())
        .collect();
    let (lo, hi) = (row[0], row[1]);
    let expect_lo = accepted.first().unwrap() - step;
    let expect_hi = accepted.last().unwrap() + step;
    assert!((lo - expect_lo).abs() <= 1e-9 * expect_lo.abs().max(1.0));
    assert!((hi - expect_hi).abs() <= 1e-9 * expect_hi.abs().max(1.0));
}

#[test]
fn bound_prints_unit_value_for_identity_inputs() {
    // p=1 and delta = 2/e zero out the log factor; n=8 cancels the 8.
    let out = run(&[
        "bound",
        "--C",
        "1",
        "--L",
        "1",
        "--n",
        "8",
        "--p",
        "1",
        "--delta",
        "0.7357588823428847",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.trim(), "1.00000000000e0");
}

#[test]
fn bound_verify_writes_boundcheck_with_small_violation_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "bound",
        "--C",
        "1",
        "--L",
        "1",
        "--n",
        "50",
        "--p",
        "3",
        "--delta",
        "0.1",
        "--verify",
        "--dgp",
        "bounded-sign",
        "--reps",
        "100",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let check = fs::read_to_string(dir.path().join("boundcheck.tsv")).unwrap();
    let fields: Vec<&str> = check.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(fields[0], "bounded-sign");
    let violation: f64 = fields[2].parse().unwrap();
    // delta + 3 binomial SEs at 100 reps.
    assert!(violation <= 0.1 + 3.0 * (0.09_f64 / 100.0).sqrt());
}

#[test]
fn x_new_file_accepts_header_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path(), "d.csv", &signal_csv());
    let qfile = write_fixture(dir.path(), "q.csv", "x1,x2\n0.5,-0.25\n");
    let out = run(&[
        "conformal",
        "--input",
        &input,
        "--response",
        "y",
        "--x-new-file",
        &qfile,
        "--alpha",
        "0.2",
        "--grid-points",
        "100",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
