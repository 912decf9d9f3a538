//! Scalar statistics used across the crate: moments, the standard normal
//! distribution, and binomial tail arithmetic for order-statistic intervals.
//!
//! The normal quantile is computed from a rational approximation refined by
//! one Halley step against a double-precision CDF, giving absolute accuracy
//! well below 1e-8 over the open unit interval.

/// Arithmetic mean. Empty input returns NaN.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with divisor `n - 1`. Fewer than two values yields 0.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Sample standard deviation with divisor `n - 1`.
pub fn sample_sd(values: &[f64]) -> f64 {
    sample_variance(values).sqrt()
}

/// Sample median (average of the two central order statistics for even n).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in median"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

// Rational minimax coefficients for erf on |x| <= 0.46875.
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
// erfc on 0.46875 < x <= 4.
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
// erfc asymptotic regime x > 4.
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];

const ONE_OVER_SQRT_PI: f64 = 0.564_189_583_547_756_3;

// exp(-x^2) computed as exp(-trunc^2) * exp(-(x-trunc)(x+trunc)) to limit
// cancellation in the erfc tails.
fn exp_neg_sq(x: f64) -> f64 {
    let xsq = (x * 16.0).trunc() / 16.0;
    let del = (x - xsq) * (x + xsq);
    (-xsq * xsq).exp() * (-del).exp()
}

fn erfc_core(x: f64) -> f64 {
    // x >= 0.46875
    if x <= 4.0 {
        let mut xnum = ERF_C[8] * x;
        let mut xden = x;
        for i in 0..7 {
            xnum = (xnum + ERF_C[i]) * x;
            xden = (xden + ERF_D[i]) * x;
        }
        exp_neg_sq(x) * (xnum + ERF_C[7]) / (xden + ERF_D[7])
    } else {
        let ysq = 1.0 / (x * x);
        let mut xnum = ERF_P[5] * ysq;
        let mut xden = ysq;
        for i in 0..4 {
            xnum = (xnum + ERF_P[i]) * ysq;
            xden = (xden + ERF_Q[i]) * ysq;
        }
        let r = ysq * (xnum + ERF_P[4]) / (xden + ERF_Q[4]);
        exp_neg_sq(x) * (ONE_OVER_SQRT_PI - r) / x
    }
}

/// Error function, accurate to double precision.
pub fn erf(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 0.46875 {
        let y = x * x;
        let mut xnum = ERF_A[4] * y;
        let mut xden = y;
        for i in 0..3 {
            xnum = (xnum + ERF_A[i]) * y;
            xden = (xden + ERF_B[i]) * y;
        }
        x * (xnum + ERF_A[3]) / (xden + ERF_B[3])
    } else if x > 0.0 {
        1.0 - erfc_core(ax)
    } else {
        erfc_core(ax) - 1.0
    }
}

/// Complementary error function, accurate to double precision.
pub fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 0.46875 {
        1.0 - erf(x)
    } else if x > 0.0 {
        erfc_core(ax)
    } else {
        2.0 - erfc_core(ax)
    }
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

// Rational initial guess for the normal quantile (relative error ~1.15e-9).
const INV_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const INV_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const INV_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const INV_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

/// Standard normal quantile (inverse CDF).
///
/// Requires `0 < p < 1`; asserts otherwise. One Halley refinement of the
/// rational initial guess brings the absolute error near machine precision.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal_quantile requires p in (0,1), got {p}");
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((INV_C[0] * q + INV_C[1]) * q + INV_C[2]) * q + INV_C[3]) * q + INV_C[4]) * q
            + INV_C[5])
            / ((((INV_D[0] * q + INV_D[1]) * q + INV_D[2]) * q + INV_D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((INV_A[0] * r + INV_A[1]) * r + INV_A[2]) * r + INV_A[3]) * r + INV_A[4]) * r
            + INV_A[5])
            * q
            / (((((INV_B[0] * r + INV_B[1]) * r + INV_B[2]) * r + INV_B[3]) * r + INV_B[4]) * r
                + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((INV_C[0] * q + INV_C[1]) * q + INV_C[2]) * q + INV_C[3]) * q + INV_C[4]) * q
            + INV_C[5])
            / ((((INV_D[0] * q + INV_D[1]) * q + INV_D[2]) * q + INV_D[3]) * q + 1.0)
    };
    // Halley refinement against the full-precision CDF.
    let e = normal_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Two-sided critical value `z` with `P(|Z| > z) = alpha`.
pub fn z_two_sided(alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha / 2.0)
}

/// CDF of Binomial(n, 1/2) at `k`, computed by log-space recursion.
pub fn binom_half_cdf(k: usize, n: usize) -> f64 {
    if k >= n {
        return 1.0;
    }
    let mut log_pmf = -(n as f64) * std::f64::consts::LN_2; // P(B = 0)
    let mut acc = log_pmf.exp();
    for i in 0..k {
        log_pmf += (((n - i) as f64) / ((i + 1) as f64)).ln();
        acc += log_pmf.exp();
    }
    acc.min(1.0)
}

/// Symmetric order-statistic ranks for a median confidence interval.
///
/// Returns 1-based ranks `(l, u)` with `u = n + 1 - l` maximizing `l` such
/// that `P(l <= Bin(n, 1/2) < u) >= 1 - alpha`, together with the exact
/// coverage achieved. `None` when even the full range `(1, n)` has coverage
/// below `1 - alpha`.
pub fn median_ci_ranks(n: usize, alpha: f64) -> Option<(usize, usize, f64)> {
    if n < 2 {
        return None;
    }
    let half_alpha = alpha / 2.0;
    // coverage(l) = 1 - 2 P(B <= l-1); feasible iff P(B <= l-1) <= alpha/2.
    let mut log_pmf = -(n as f64) * std::f64::consts::LN_2;
    let mut cdf = log_pmf.exp(); // P(B <= 0)
    if cdf > half_alpha {
        return None;
    }
    let mut l = 1usize;
    let max_l = n / 2; // need l < u = n + 1 - l
    let mut tail = cdf; // P(B <= l-1) for current l
    while l < max_l {
        log_pmf += (((n - (l - 1)) as f64) / (l as f64)).ln();
        let next = cdf + log_pmf.exp(); // P(B <= l)
        if next > half_alpha {
            break;
        }
        cdf = next;
        tail = cdf;
        l += 1;
    }
    let coverage = 1.0 - 2.0 * tail;
    Some((l, n + 1 - l, coverage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn erf_matches_reference_values() {
        let cases = [
            (0.1, 0.1124629160182849),
            (0.46875, 0.49261347321793797),
            (0.5, 0.5204998778130465),
            (1.0, 0.8427007929497149),
            (2.0, 0.9953222650189527),
            (3.5, 0.9999992569016276),
        ];
        for (x, want) in cases {
            assert_abs_diff_eq!(erf(x), want, epsilon = 1e-14);
            assert_abs_diff_eq!(erf(-x), -want, epsilon = 1e-14);
        }
    }

    #[test]
    fn erfc_matches_reference_values() {
        let cases = [
            (0.5, 0.4795001221869535),
            (1.0, 0.15729920705028513),
            (2.0, 0.004677734981047265),
            (3.5, 7.430983723414128e-07),
            (4.5, 1.9661604415428873e-10),
            (6.0, 2.1519736712498916e-17),
        ];
        for (x, want) in cases {
            let got = erfc(x);
            assert!(
                (got - want).abs() <= 1e-13 * want.max(1e-300),
                "erfc({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn quantile_matches_tabled_values() {
        let cases = [
            (0.6, 0.2533471031357997),
            (0.9, 1.2815515655446004),
            (0.95, 1.6448536269514722),
            (0.975, 1.959963984540054),
            (0.99, 2.3263478740408408),
            (0.995, 2.5758293035489004),
            (0.999, 3.090232306167813),
            (0.025, -1.9599639845400545),
            (0.3, -0.5244005127080409),
            (1e-6, -4.753424308822899),
        ];
        for (p, want) in cases {
            assert_abs_diff_eq!(normal_quantile(p), want, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(normal_quantile(0.5), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..200 {
            let p = i as f64 / 200.0;
            assert_abs_diff_eq!(normal_cdf(normal_quantile(p)), p, epsilon = 1e-12);
        }
    }

    #[test]
    #[should_panic]
    fn quantile_rejects_unit_endpoint() {
        normal_quantile(1.0);
    }

    #[test]
    fn binomial_cdf_small_cases() {
        // Bin(6, 1/2): P(B <= 0) = 1/64, P(B <= 1) = 7/64.
        assert_abs_diff_eq!(binom_half_cdf(0, 6), 1.0 / 64.0, epsilon = 1e-15);
        assert_abs_diff_eq!(binom_half_cdf(1, 6), 7.0 / 64.0, epsilon = 1e-15);
        assert_abs_diff_eq!(binom_half_cdf(6, 6), 1.0, epsilon = 0.0);
    }

    #[test]
    fn median_ranks_match_binomial_tails() {
        // n=5 at alpha=0.05: best coverage 1 - 2/32 = 0.9375 < 0.95.
        assert!(median_ci_ranks(5, 0.05).is_none());
        // n=6: ranks (1,6), coverage 1 - 2/64 = 0.96875.
        let (l, u, cov) = median_ci_ranks(6, 0.05).unwrap();
        assert_eq!((l, u), (1, 6));
        assert_abs_diff_eq!(cov, 0.96875, epsilon = 1e-12);
        // Larger n tightens the ranks symmetrically.
        let (l, u, cov) = median_ci_ranks(100, 0.05).unwrap();
        assert_eq!(u, 101 - l);
        assert!(cov >= 0.95);
        let tighter = binom_half_cdf(l, 100); // one more rank would overshoot
        assert!(tighter > 0.025);
    }

    #[test]
    fn descriptive_stats() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(mean(&d), 2.5, epsilon = 0.0);
        assert_abs_diff_eq!(sample_sd(&d), 1.2909944487358056, epsilon = 1e-15);
        assert_abs_diff_eq!(median(&d), 2.5, epsilon = 0.0);
        assert_abs_diff_eq!(median(&[3.0, 1.0, 2.0]), 2.0, epsilon = 0.0);
    }
}
