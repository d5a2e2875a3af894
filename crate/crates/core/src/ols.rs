//! Least squares with column-pivoted Householder QR, plus the regression
//! diagnostics built on it: Frisch–Waugh–Lovell residualization, the variance
//! inflation factor of a treatment column, and the classical OLS variance
//! estimates of a treatment coefficient with and without covariates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A column-pivot magnitude at or below this fraction of the largest pivot marks
/// the design as rank deficient.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// `R^2` at or above `1 - COLLINEARITY_TOLERANCE` counts as perfect collinearity.
pub const COLLINEARITY_TOLERANCE: f64 = 1e-12;

/// Relative spread below which a vector is treated as constant.
const CONSTANT_TOLERANCE: f64 = 1e-12;

/// A dense real matrix with one label per column.
///
/// Regular designs satisfy `n >= p >= 1`. A covariate block with no columns is
/// available through [`DesignMatrix::empty`] for the "no covariates" case.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, p) = values.shape();
        if p == 0 {
            return Err(Error::DimensionError("design needs at least one column".into()));
        }
        if n < p {
            return Err(Error::DimensionError(format!(
                "design has {n} rows but {p} columns"
            )));
        }
        if labels.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: labels.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        Ok(Self { values, labels })
    }

    /// Builds a design from columns labelled `x_1, x_2, ...`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let labels = (1..=columns.len()).map(|j| format!("x_{j}")).collect();
        Self::from_labelled_columns(columns, labels)
    }

    pub fn from_labelled_columns(columns: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(Error::DimensionError("design needs at least one column".into()));
        };
        let n = first.len();
        for c in columns {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.len(),
                });
            }
        }
        let values = DMatrix::from_iterator(n, columns.len(), columns.iter().flatten().copied());
        Self::new(values, labels)
    }

    /// A single unlabelled-covariate column, labelled `x_1`.
    pub fn column_vector(x: &[f64]) -> Result<Self> {
        Self::from_columns(&[x.to_vec()])
    }

    /// An `n x 0` covariate block.
    pub fn empty(n: usize) -> Self {
        Self {
            values: DMatrix::zeros(n, 0),
            labels: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.nrows();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.ncols()).map(move |j| self.column(j))
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// `[columns..., self]` with the given leading columns prepended.
    pub(crate) fn prepend(&self, leading: &[(&str, &[f64])]) -> Result<Self> {
        let n = self.nrows();
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(leading.len() + self.ncols());
        let mut labels = Vec::with_capacity(leading.len() + self.ncols());
        for (label, col) in leading {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: col.len(),
                });
            }
            cols.push(col.to_vec());
            labels.push((*label).to_string());
        }
        cols.extend(self.columns().map(<[f64]>::to_vec));
        labels.extend(self.labels.iter().cloned());
        Self::from_labelled_columns(&cols, labels)
    }

    /// `(1, self)`.
    pub fn with_intercept(&self) -> Result<Self> {
        let ones = vec![1.0; self.nrows()];
        self.prepend(&[("(intercept)", &ones)])
    }
}

/// Result of one least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub rss: f64,
    pub dof: usize,
}

/// Minimizes `|response - design * b|^2` by Householder QR with column pivoting.
pub fn least_squares(design: &DesignMatrix, response: &[f64]) -> Result<OlsFit> {
    let (n, p) = (design.nrows(), design.ncols());
    if response.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: response.len(),
        });
    }
    if p == 0 {
        return Err(Error::DimensionError("design needs at least one column".into()));
    }
    if n < p {
        return Err(Error::InsufficientDof { n, params: p });
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response"));
    }

    let mut a = design.values.clone();
    let mut qty = DVector::from_column_slice(response);
    let mut perm: Vec<usize> = (0..p).collect();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(p);
    let mut largest_pivot = 0.0;

    for k in 0..p {
        let (pivot, norm) = (k..p)
            .map(|j| (j, a.view((k, j), (n - k, 1)).norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot != k {
            a.swap_columns(k, pivot);
            perm.swap(k, pivot);
        }
        if k == 0 {
            largest_pivot = norm;
        }
        if norm == 0.0 || norm <= PIVOT_TOLERANCE * largest_pivot {
            return Err(Error::RankDeficient);
        }

        let mut v: DVector<f64> = a.view((k, k), (n - k, 1)).column(0).into_owned();
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.norm();
        if vnorm > 0.0 {
            v /= vnorm;
            for j in k..p {
                let mut col = a.column_mut(j);
                let mut col = col.rows_mut(k, n - k);
                let d = 2.0 * v.dot(&col);
                col.axpy(-d, &v, 1.0);
            }
            let mut tail = qty.rows_mut(k, n - k);
            let d = 2.0 * v.dot(&tail);
            tail.axpy(-d, &v, 1.0);
        }
        reflectors.push(v);
    }

    // R b = (Q'y)[..p]
    let mut b_perm = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = ((i + 1)..p).map(|j| a[(i, j)] * b_perm[j]).sum();
        b_perm[i] = (qty[i] - s) / a[(i, i)];
    }
    let mut coefficients = vec![0.0; p];
    for (k, &j) in perm.iter().enumerate() {
        coefficients[j] = b_perm[k];
    }

    // residual = Q [0; (Q'y)[p..]]
    let mut r = qty;
    r.rows_mut(0, p).fill(0.0);
    for (k, v) in reflectors.iter().enumerate().rev() {
        let mut tail = r.rows_mut(k, n - k);
        let d = 2.0 * v.dot(&tail);
        tail.axpy(-d, v, 1.0);
    }
    let residuals: Vec<f64> = r.iter().copied().collect();
    let fitted: Vec<f64> = (design.values() * DVector::from_column_slice(&coefficients))
        .iter()
        .copied()
        .collect();
    let rss = residuals.iter().map(|e| e * e).sum();

    Ok(OlsFit {
        coefficients,
        residuals,
        fitted,
        rss,
        dof: n - p,
    })
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn centered_sum_of_squares(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum()
}

pub(crate) fn is_constant(v: &[f64]) -> bool {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo <= CONSTANT_TOLERANCE * hi.abs().max(lo.abs()).max(1.0)
}

fn check_length(v: &[f64], x: &DesignMatrix) -> Result<()> {
    if v.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: v.len(),
        });
    }
    Ok(())
}

/// Residuals of `v` regressed on `(1, x)`; `v - mean(v)` when `x` has no columns.
pub(crate) fn residualize(v: &[f64], x: &DesignMatrix) -> Result<Vec<f64>> {
    check_length(v, x)?;
    if x.ncols() == 0 {
        let m = mean(v);
        return Ok(v.iter().map(|e| e - m).collect());
    }
    Ok(least_squares(&x.with_intercept()?, v)?.residuals)
}

/// The residual of `z` from its least-squares fit on `(1, x)`.
///
/// By Frisch–Waugh–Lovell the coefficient of `z` in the regression of any `y`
/// on `(1, z, x)` is `sum(res * y) / sum(res^2)`.
pub fn fwl_residualize(z: &[f64], x: &DesignMatrix) -> Result<Vec<f64>> {
    check_length(z, x)?;
    let n = z.len();
    if n <= x.ncols() + 1 {
        return Err(Error::InsufficientDof {
            n,
            params: x.ncols() + 1,
        });
    }
    let res = residualize(z, x)?;
    let res_norm = res.iter().map(|e| e * e).sum::<f64>().sqrt();
    let z_norm = z.iter().map(|e| e * e).sum::<f64>().sqrt();
    if res_norm <= PIVOT_TOLERANCE * z_norm || z_norm == 0.0 {
        return Err(Error::RankDeficient);
    }
    Ok(res)
}

fn treatment_sums_of_squares(z: &[f64], x: &DesignMatrix) -> Result<(f64, f64)> {
    check_length(z, x)?;
    if z.is_empty() || is_constant(z) {
        return Err(Error::ConstantTreatment);
    }
    let tss = centered_sum_of_squares(z);
    let rss: f64 = residualize(z, x)?.iter().map(|e| e * e).sum();
    Ok((tss, rss))
}

/// Sample `R^2` of `z` regressed on `(1, x)`, clamped to `[0, 1]`.
pub fn r_squared_z_given_x(z: &[f64], x: &DesignMatrix) -> Result<f64> {
    let (tss, rss) = treatment_sums_of_squares(z, x)?;
    Ok((1.0 - rss / tss).clamp(0.0, 1.0))
}

/// Variance inflation factor of `z` given covariates `x`: total over residual
/// sum of squares of `z` on `(1, x)`. Always at least one.
pub fn vif(z: &[f64], x: &DesignMatrix) -> Result<f64> {
    let (tss, rss) = treatment_sums_of_squares(z, x)?;
    if 1.0 - rss / tss >= 1.0 - COLLINEARITY_TOLERANCE {
        return Err(Error::PerfectCollinearity);
    }
    Ok(tss / rss)
}

/// Classical OLS variance estimate of the `z` coefficient in the fit of `y` on
/// `(1, z, x)`:
/// `sigma2_hat / sum((z - mean z)^2) / (1 - R^2_{z|x})`, with `sigma2_hat` the
/// residual sum of squares over `n - 2 - dim(x)`.
pub fn estimated_variance_adjusted(y: &[f64], z: &[f64], x: &DesignMatrix) -> Result<f64> {
    check_length(y, x)?;
    check_length(z, x)?;
    let n = y.len();
    let params = 2 + x.ncols();
    if n <= params {
        return Err(Error::InsufficientDof { n, params });
    }
    let ones = vec![1.0; n];
    let design = x.prepend(&[("(intercept)", &ones), ("z", z)])?;
    let fit = least_squares(&design, y)?;
    let sigma2 = fit.rss / (n - params) as f64;
    let inflation = vif(z, x)?;
    Ok(sigma2 / centered_sum_of_squares(z) * inflation)
}

/// Classical OLS variance estimate of the slope in the fit of `y` on `(1, z)`.
pub fn estimated_variance_unadjusted(y: &[f64], z: &[f64]) -> Result<f64> {
    if y.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: y.len(),
        });
    }
    let n = y.len();
    if n <= 2 {
        return Err(Error::InsufficientDof { n, params: 2 });
    }
    if is_constant(z) {
        return Err(Error::ConstantTreatment);
    }
    let design = DesignMatrix::empty(n).prepend(&[("(intercept)", &vec![1.0; n]), ("z", z)])?;
    let fit = least_squares(&design, y)?;
    Ok(fit.rss / (n - 2) as f64 / centered_sum_of_squares(z))
}
