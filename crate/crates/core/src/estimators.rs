//! Treatment-effect estimators for a binary assignment.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ols::{self, DesignMatrix};

/// A binary treatment vector with both arms non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    z: Vec<u8>,
    n1: usize,
}

impl Assignment {
    pub fn new(z: Vec<u8>) -> Result<Self> {
        if let Some((index, &value)) = z.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::NonBinaryAssignment {
                index,
                value: value as f64,
            });
        }
        let n1 = z.iter().filter(|&&v| v == 1).count();
        let n0 = z.len() - n1;
        if n1 == 0 || n0 == 0 {
            return Err(Error::DegenerateAssignment { n1, n0 });
        }
        Ok(Self { z, n1 })
    }

    /// Accepts a real vector whose entries are exactly 0 or 1.
    pub fn from_indicator(z: &[f64]) -> Result<Self> {
        let mut bits = Vec::with_capacity(z.len());
        for (index, &value) in z.iter().enumerate() {
            if value == 0.0 {
                bits.push(0);
            } else if value == 1.0 {
                bits.push(1);
            } else {
                return Err(Error::NonBinaryAssignment { index, value });
            }
        }
        Self::new(bits)
    }

    /// Units listed in `treated` get 1; indices must be `< n`.
    pub fn from_treated(n: usize, treated: &[usize]) -> Result<Self> {
        let mut z = vec![0u8; n];
        for &i in treated {
            if i >= n {
                return Err(Error::DimensionMismatch { expected: n, got: i + 1 });
            }
            z[i] = 1;
        }
        Self::new(z)
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.z.len() - self.n1
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.z[i] == 1
    }

    pub fn indicator(&self) -> Vec<f64> {
        self.z.iter().map(|&v| f64::from(v)).collect()
    }

    /// Treatment and control swapped.
    pub fn flipped(&self) -> Self {
        Self {
            z: self.z.iter().map(|&v| 1 - v).collect(),
            n1: self.n0(),
        }
    }

    /// `n / (n1 n0)`, the scale of every difference-in-means variance.
    pub fn variance_scale(&self) -> f64 {
        self.n() as f64 / (self.n1 as f64 * self.n0() as f64)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.z {
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Treated mean minus control mean of `v`.
pub fn diff_in_means(v: &[f64], assignment: &Assignment) -> Result<f64> {
    if v.len() != assignment.n() {
        return Err(Error::DimensionMismatch {
            expected: assignment.n(),
            got: v.len(),
        });
    }
    let (mut treated, mut control) = (0.0, 0.0);
    for (x, &z) in v.iter().zip(assignment.z()) {
        if z == 1 {
            treated += x;
        } else {
            control += x;
        }
    }
    Ok(treated / assignment.n1() as f64 - control / assignment.n0() as f64)
}

/// Column-wise difference in means of a covariate block.
pub fn covariate_imbalance(x: &DesignMatrix, assignment: &Assignment) -> Result<Vec<f64>> {
    x.columns().map(|c| diff_in_means(c, assignment)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    /// Difference in means; the slope of `y` on `(1, z)`.
    Unadjusted,
    /// Coefficient of `z` in the regression of `y` on `(1, z, x)`.
    Ancova,
    /// Coefficient of `z` in the regression of `y` on `(1, z, x_c, z * x_c)`.
    Lin,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [Self::Unadjusted, Self::Ancova, Self::Lin];

    pub fn name(self) -> &'static str {
        match self {
            Self::Unadjusted => "unadjusted",
            Self::Ancova => "ancova",
            Self::Lin => "lin",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unadjusted" => Ok(Self::Unadjusted),
            "ancova" => Ok(Self::Ancova),
            "lin" => Ok(Self::Lin),
            other => Err(Error::InvalidSpec(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorResult {
    pub tau_hat: f64,
    pub kind: EstimatorKind,
    pub est_variance: Option<f64>,
}

fn check_lengths(y: &[f64], assignment: &Assignment, x: &DesignMatrix) -> Result<()> {
    if y.len() != assignment.n() {
        return Err(Error::DimensionMismatch {
            expected: assignment.n(),
            got: y.len(),
        });
    }
    if x.nrows() != assignment.n() {
        return Err(Error::DimensionMismatch {
            expected: assignment.n(),
            got: x.nrows(),
        });
    }
    Ok(())
}

/// Interaction block `(x_c, z * x_c)` with `x_c` centred at its sample mean.
fn lin_covariates(assignment: &Assignment, x: &DesignMatrix) -> Result<DesignMatrix> {
    let k = x.ncols();
    let mut cols = Vec::with_capacity(2 * k);
    let mut labels = Vec::with_capacity(2 * k);
    for (c, label) in x.columns().zip(x.labels()) {
        let m = ols::mean(c);
        cols.push(c.iter().map(|v| v - m).collect::<Vec<_>>());
        labels.push(label.clone());
    }
    for j in 0..k {
        let inter = cols[j]
            .iter()
            .zip(assignment.z())
            .map(|(v, &z)| v * f64::from(z))
            .collect();
        cols.push(inter);
        labels.push(format!("z:{}", x.labels()[j]));
    }
    DesignMatrix::from_labelled_columns(&cols, labels)
}

fn z_coefficient(y: &[f64], z: &[f64], w: &DesignMatrix) -> Result<f64> {
    let n = y.len();
    let params = 2 + w.ncols();
    if n <= params {
        return Err(Error::InsufficientDof { n, params });
    }
    let ones = vec![1.0; n];
    let design = w.prepend(&[("(intercept)", &ones), ("z", z)])?;
    Ok(ols::least_squares(&design, y)?.coefficients[1])
}

pub fn unadjusted_estimator(y: &[f64], assignment: &Assignment) -> Result<EstimatorResult> {
    Ok(EstimatorResult {
        tau_hat: diff_in_means(y, assignment)?,
        kind: EstimatorKind::Unadjusted,
        est_variance: None,
    })
}

pub fn ancova_estimator(
    y: &[f64],
    assignment: &Assignment,
    x: &DesignMatrix,
) -> Result<EstimatorResult> {
    check_lengths(y, assignment, x)?;
    Ok(EstimatorResult {
        tau_hat: z_coefficient(y, &assignment.indicator(), x)?,
        kind: EstimatorKind::Ancova,
        est_variance: None,
    })
}

pub fn lin_estimator(
    y: &[f64],
    assignment: &Assignment,
    x: &DesignMatrix,
) -> Result<EstimatorResult> {
    check_lengths(y, assignment, x)?;
    let tau_hat = if x.ncols() == 0 {
        diff_in_means(y, assignment)?
    } else {
        z_coefficient(y, &assignment.indicator(), &lin_covariates(assignment, x)?)?
    };
    Ok(EstimatorResult {
        tau_hat,
        kind: EstimatorKind::Lin,
        est_variance: None,
    })
}

/// Runs `kind`, attaching the classical OLS variance estimate when requested.
pub fn estimate(
    kind: EstimatorKind,
    y: &[f64],
    assignment: &Assignment,
    x: &DesignMatrix,
    with_variance: bool,
) -> Result<EstimatorResult> {
    let mut result = match kind {
        EstimatorKind::Unadjusted => unadjusted_estimator(y, assignment)?,
        EstimatorKind::Ancova => ancova_estimator(y, assignment, x)?,
        EstimatorKind::Lin => lin_estimator(y, assignment, x)?,
    };
    if with_variance {
        let z = assignment.indicator();
        result.est_variance = Some(match kind {
            EstimatorKind::Unadjusted => ols::estimated_variance_unadjusted(y, &z)?,
            EstimatorKind::Ancova => ols::estimated_variance_adjusted(y, &z, x)?,
            EstimatorKind::Lin if x.ncols() == 0 => ols::estimated_variance_unadjusted(y, &z)?,
            EstimatorKind::Lin => {
                ols::estimated_variance_adjusted(y, &z, &lin_covariates(assignment, x)?)?
            }
        });
    }
    Ok(result)
}

/// Covariate block each estimator adjusts for, given the assignment. The
/// estimator is the coefficient of `z` in the regression on `(1, z, block)`.
pub(crate) fn adjustment_block(
    kind: EstimatorKind,
    assignment: &Assignment,
    x: &DesignMatrix,
) -> Result<DesignMatrix> {
    match kind {
        EstimatorKind::Unadjusted => Ok(DesignMatrix::empty(x.nrows())),
        EstimatorKind::Ancova => Ok(x.clone()),
        EstimatorKind::Lin if x.ncols() == 0 => Ok(DesignMatrix::empty(x.nrows())),
        EstimatorKind::Lin => lin_covariates(assignment, x),
    }
}

/// Finite-population covariance `(n - 1)^-1 sum (x_i - xbar)(x_i - xbar)'`.
pub fn finite_pop_covariance(x: &DesignMatrix) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::DimensionError(format!(
            "finite-population covariance needs n >= 2, got {n}"
        )));
    }
    let k = x.ncols();
    let centered: Vec<Vec<f64>> = x
        .columns()
        .map(|c| {
            let m = ols::mean(c);
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let mut s = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = centered[a].iter().zip(&centered[b]).map(|(p, q)| p * q).sum::<f64>()
                / (n - 1) as f64;
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    Ok(s)
}
