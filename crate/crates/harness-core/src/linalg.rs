//! Small dense linear-algebra helpers shared by the selectors and the
//! inference modules. Least squares goes through the SVD so rank-deficient
//! designs degrade to the minimum-norm solution instead of failing.

use nalgebra::{DMatrix, DVector};

pub(crate) struct LstsqFit {
    pub coef: DVector<f64>,
    pub fitted: DVector<f64>,
    pub rss: f64,
    pub rank: usize,
}

/// Minimum-norm least squares via thin SVD with a relative singular-value
/// cutoff of `max(m, k) * eps * sigma_max`.
pub(crate) fn lstsq(a: &DMatrix<f64>, y: &DVector<f64>) -> LstsqFit {
    let (m, k) = (a.nrows(), a.ncols());
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = (m.max(k) as f64) * f64::EPSILON * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let coef = svd
        .solve(y, cutoff)
        .expect("svd solve with u/v computed")
        .column(0)
        .into_owned();
    let fitted = a * &coef;
    let rss = y
        .iter()
        .zip(fitted.iter())
        .map(|(yi, fi)| (yi - fi) * (yi - fi))
        .sum();
    LstsqFit {
        coef,
        fitted,
        rss,
        rank,
    }
}

/// Design matrix over the given columns of `x`, optionally with a leading
/// all-ones intercept column. Column order follows `subset`.
pub(crate) fn design(x: &DMatrix<f64>, subset: &[usize], intercept: bool) -> DMatrix<f64> {
    let n = x.nrows();
    let k = subset.len() + usize::from(intercept);
    let mut d = DMatrix::<f64>::zeros(n, k);
    let mut col = 0;
    if intercept {
        d.column_mut(0).fill(1.0);
        col = 1;
    }
    for &j in subset {
        d.column_mut(col).copy_from(&x.column(j));
        col += 1;
    }
    d
}

/// Condition number of the Gram matrix `AᵀA` (ratio of extreme eigenvalues).
/// Returns infinity when the smallest eigenvalue is not positive.
pub(crate) fn gram_condition(a: &DMatrix<f64>) -> f64 {
    let gram = a.transpose() * a;
    let eig = gram.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
