//! Large-sample sanity run of the bound verifier: with a well-specified
//! sparse process and n = 10^6, the excess risk is orders of magnitude
//! below the bound, so no rep violates it.

use harness_core::riskbound::{verify_bound, BoundInputs, DgpSpec};

#[test]
fn million_sample_well_specified_process_never_violates() {
    let dgp = DgpSpec::BoundedLinear {
        theta: vec![0.5, 0.3],
        noise_sd: 0.05,
    };
    let inputs = BoundInputs {
        c_max: 1.0,
        l1_budget: 1.0,
        n: 1_000_000,
        p: 2,
        delta: 0.1,
    };
    let report = verify_bound(&dgp, &inputs, 100, 7).unwrap();
    println!(
        "bound {:.5}, oracle risk {:.6}, mean fitted risk {:.6}, violations {:.3}",
        report.bound_value, report.oracle_risk, report.mean_fitted_risk, report.violation_rate
    );
    assert_eq!(report.violation_rate, 0.0);
    assert_eq!(report.reps, 100);
    assert_eq!(report.holdout_size, 50_000);
    // The fitted risk hugs the oracle at this sample size.
    assert!(report.mean_fitted_risk <= report.oracle_risk + 0.01 * report.bound_value);
}
