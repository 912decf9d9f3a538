//! Dataset ingestion, validation, train-half standardization, and seeded
//! random splitting into two halves.
//!
//! Everything here is immutable after construction and safe to share across
//! threads. Randomness enters only through [`split`]'s explicit seed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty data body (header only or blank file)")]
    EmptyBody,
    #[error("response column {0:?} not found in header")]
    MissingResponse(String),
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("non-numeric cell at data row {row}, column {column:?}: {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-finite value at data row {row}, column {column:?}")]
    NonFiniteValue { row: usize, column: String },
    #[error("row {row} has {got} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("dataset has {n} rows; operation needs at least {min}")]
    TooSmall { n: usize, min: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// Immutable design matrix and response with column labels.
///
/// Invariants enforced at construction: all entries finite, names unique
/// with one per predictor column, and at least one row and one column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, names: Vec<String>) -> Result<Self, DataError> {
        let (n, p) = (x.nrows(), x.ncols());
        if n == 0 || p == 0 {
            return Err(DataError::Invalid(format!(
                "need n >= 1 and p >= 1, got n={n}, p={p}"
            )));
        }
        if y.len() != n {
            return Err(DataError::DimensionMismatch(format!(
                "response length {} != row count {n}",
                y.len()
            )));
        }
        if names.len() != p {
            return Err(DataError::DimensionMismatch(format!(
                "{} names for {p} columns",
                names.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(DataError::DuplicateColumn(name.clone()));
            }
        }
        for (i, row) in x.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFiniteValue {
                        row: i + 1,
                        column: names[j].clone(),
                    });
                }
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteValue {
                row: i + 1,
                column: "<response>".into(),
            });
        }
        Ok(Self { x, y, names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Column means of the predictors.
    pub fn column_means(&self) -> Vec<f64> {
        (0..self.p()).map(|j| self.x.column(j).mean()).collect()
    }

    /// New dataset from the given row indices, preserving order.
    pub(crate) fn take_rows(&self, idx: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(idx.len(), self.p(), |i, j| self.x[(idx[i], j)]);
        let y = DVector::from_fn(idx.len(), |i, _| self.y[idx[i]]);
        Dataset {
            x,
            y,
            names: self.names.clone(),
        }
    }
}

/// The two halves of a random split, with the seed and permutation that
/// produced them. Rows of `d1` followed by rows of `d2` are exactly the
/// original rows in permutation order.
#[derive(Debug, Clone)]
pub struct SplitPair {
    d1: Dataset,
    d2: Dataset,
    seed: u64,
    permutation: Vec<usize>,
}

impl SplitPair {
    pub fn d1(&self) -> &Dataset {
        &self.d1
    }

    pub fn d2(&self) -> &Dataset {
        &self.d2
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }
}

/// Train-half standardization statistics. `scales` holds 1.0 for columns
/// flagged in `zero_variance`; those are centered but never divided.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationRecord {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub response_mean: f64,
    pub applied: bool,
    pub zero_variance: Vec<usize>,
}

impl StandardizationRecord {
    /// Identity record (no transformation applied).
    pub fn identity(p: usize) -> Self {
        Self {
            means: vec![0.0; p],
            scales: vec![1.0; p],
            response_mean: 0.0,
            applied: false,
            zero_variance: Vec::new(),
        }
    }

    /// Inverts the predictor transformation. The response is untouched by
    /// [`standardize`], so it passes through unchanged.
    pub fn unstandardize(&self, data: &Dataset) -> Result<Dataset, DataError> {
        if data.p() != self.means.len() {
            return Err(DataError::DimensionMismatch(format!(
                "record for p={} applied to p={}",
                self.means.len(),
                data.p()
            )));
        }
        if !self.applied {
            return Ok(data.clone());
        }
        let mut x = data.x.clone();
        for j in 0..x.ncols() {
            let (m, s) = (self.means[j], self.scales[j]);
            for v in x.column_mut(j).iter_mut() {
                *v = *v * s + m;
            }
        }
        Dataset::new(x, data.y.clone(), data.names.to_vec())
    }
}

/// Loads an RFC-4180-style CSV (header required, '.' decimal separator, no
/// missing-value sentinel) and moves the named response column into `y`.
/// Predictor column order is preserved. Row numbers in errors are 1-based
/// over the data body.
pub fn load_csv<P: AsRef<Path>>(path: P, response: &str) -> Result<Dataset, DataError> {
    let path_str = path.as_ref().display().to_string();
    let file = std::fs::File::open(path.as_ref()).map_err(|source| DataError::Io {
        path: path_str,
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    for (i, name) in headers.iter().enumerate() {
        if headers[..i].contains(name) {
            return Err(DataError::DuplicateColumn(name.clone()));
        }
    }
    let y_col = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| DataError::MissingResponse(response.to_string()))?;

    let expected = headers.len();
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != expected {
            return Err(DataError::RaggedRow {
                row,
                expected,
                got: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let value: f64 = cell.parse().map_err(|_| DataError::NonNumericCell {
                row,
                column: headers[j].clone(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFiniteValue {
                    row,
                    column: headers[j].clone(),
                });
            }
            if j == y_col {
                ys.push(value);
            } else {
                xs.push(value);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(DataError::EmptyBody);
    }
    let p = expected - 1;
    if p == 0 {
        return Err(DataError::Invalid(
            "file has only the response column".into(),
        ));
    }
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != y_col)
        .map(|(_, h)| h.clone())
        .collect();
    let x = DMatrix::from_row_slice(n, p, &xs);
    Dataset::new(x, DVector::from_vec(ys), names)
}

/// Splits `data` into two halves with a uniformly random permutation drawn
/// from a ChaCha stream seeded by `seed`. `d1` receives the first
/// `ceil(n/2)` permuted rows, so for odd n the selection half is larger.
/// Deterministic: the same `(data, seed)` always yields the same pair.
pub fn split(data: &Dataset, seed: u64) -> Result<SplitPair, DataError> {
    let n = data.n();
    if n < 4 {
        return Err(DataError::TooSmall { n, min: 4 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permutation: Vec<usize> = (0..n).collect();
    // Fisher-Yates, explicit so the permutation is pinned to this crate.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        permutation.swap(i, j);
    }
    let m1 = n.div_ceil(2);
    let d1 = data.take_rows(&permutation[..m1]);
    let d2 = data.take_rows(&permutation[m1..]);
    Ok(SplitPair {
        d1,
        d2,
        seed,
        permutation,
    })
}

/// Standardizes predictors of both datasets using means and scales computed
/// from `train` only: center by the train mean, divide by the train sample
/// standard deviation (divisor m-1). Zero-variance columns are centered,
/// left unscaled, and flagged. The response is not transformed; the train
/// response mean is recorded for downstream baselines.
pub fn standardize(
    train: &Dataset,
    apply_to: &Dataset,
) -> Result<(Dataset, Dataset, StandardizationRecord), DataError> {
    if train.p() != apply_to.p() {
        return Err(DataError::DimensionMismatch(format!(
            "train has p={}, apply_to has p={}",
            train.p(),
            apply_to.p()
        )));
    }
    let p = train.p();
    let m = train.n();
    let mut means = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    let mut zero_variance = Vec::new();
    for j in 0..p {
        let col = train.x().column(j);
        let mean = col.mean();
        let var = if m < 2 {
            0.0
        } else {
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64
        };
        let sd = var.sqrt();
        means.push(mean);
        if sd > 0.0 {
            scales.push(sd);
        } else {
            scales.push(1.0);
            zero_variance.push(j);
        }
    }
    let record = StandardizationRecord {
        means,
        scales,
        response_mean: train.y().mean(),
        applied: true,
        zero_variance,
    };
    let apply = |d: &Dataset| -> Result<Dataset, DataError> {
        let mut x = d.x().clone();
        for j in 0..p {
            let (mean, scale) = (record.means[j], record.scales[j]);
            for v in x.column_mut(j).iter_mut() {
                *v = (*v - mean) / scale;
            }
        }
        Dataset::new(x, d.y().clone(), d.names().to_vec())
    };
    Ok((apply(train)?, apply(apply_to)?, record))
}
