//! Treatment-assignment mechanisms.
//!
//! Generators take the caller's generator by `&mut`; the caller owns stream
//! allocation (see [`crate::rng`]).

use itertools::Itertools;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{finite_pop_covariance, Assignment};
use crate::ols::DesignMatrix;

pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;

/// Consecutive degenerate Bernoulli draws tolerated before giving up.
pub const BERNOULLI_MAX_DEGENERATE: u64 = 10_000;

/// Smallest eigenvalue of the covariate covariance must exceed this fraction
/// of the largest for the balance statistic to be defined.
pub const EIGEN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignKind {
    Complete {
        n1: usize,
    },
    Bernoulli {
        p: f64,
    },
    Rerandomized {
        n1: usize,
        threshold_a: f64,
        max_attempts: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpec {
    pub n: usize,
    pub kind: DesignKind,
}

impl DesignSpec {
    pub fn complete(n: usize, n1: usize) -> Result<Self> {
        Self::new(n, DesignKind::Complete { n1 })
    }

    pub fn bernoulli(n: usize, p: f64) -> Result<Self> {
        Self::new(n, DesignKind::Bernoulli { p })
    }

    pub fn rerandomized(n: usize, n1: usize, threshold_a: f64, max_attempts: u64) -> Result<Self> {
        Self::new(
            n,
            DesignKind::Rerandomized {
                n1,
                threshold_a,
                max_attempts,
            },
        )
    }

    pub fn new(n: usize, kind: DesignKind) -> Result<Self> {
        let spec = Self { n, kind };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DesignKind::Complete { n1 } => check_counts(self.n, n1),
            DesignKind::Bernoulli { p } => {
                if p > 0.0 && p < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidDesign(format!("p = {p} must lie in (0, 1)")))
                }
            }
            DesignKind::Rerandomized {
                n1,
                threshold_a,
                max_attempts,
            } => {
                check_counts(self.n, n1)?;
                if !(threshold_a > 0.0) {
                    return Err(Error::InvalidDesign(format!(
                        "threshold_a = {threshold_a} must be positive"
                    )));
                }
                if max_attempts == 0 {
                    return Err(Error::InvalidDesign("max_attempts must be at least 1".into()));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DesignKind::Complete { .. } => "complete",
            DesignKind::Bernoulli { .. } => "bernoulli",
            DesignKind::Rerandomized { .. } => "rerandomized",
        }
    }

    /// Treated count when the design fixes it.
    pub fn fixed_n1(&self) -> Option<usize> {
        match self.kind {
            DesignKind::Complete { n1 } | DesignKind::Rerandomized { n1, .. } => Some(n1),
            DesignKind::Bernoulli { .. } => None,
        }
    }
}

fn check_counts(n: usize, n1: usize) -> Result<()> {
    if n1 == 0 || n1 >= n {
        return Err(Error::InvalidCounts { n, n1 });
    }
    Ok(())
}

/// Uniformly random subset of `n1` treated units out of `n`.
pub fn complete_randomization<R: Rng + ?Sized>(n: usize, n1: usize, rng: &mut R) -> Result<Assignment> {
    check_counts(n, n1)?;
    Assignment::from_treated(n, &rand::seq::index::sample(rng, n, n1).into_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliDraw {
    pub assignment: Assignment,
    /// Degenerate (single-arm) draws discarded before this one.
    pub rejections: u64,
}

/// IID Bernoulli(`p`) assignment, redrawn while every unit lands in one arm.
pub fn bernoulli_assignment<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<BernoulliDraw> {
    DesignSpec::bernoulli(n, p)?;
    for rejections in 0..BERNOULLI_MAX_DEGENERATE {
        let z: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(p))).collect();
        match Assignment::new(z) {
            Ok(assignment) => return Ok(BernoulliDraw { assignment, rejections }),
            Err(Error::DegenerateAssignment { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::BernoulliExhausted {
        draws: BERNOULLI_MAX_DEGENERATE,
    })
}

/// Keeps the draws with exactly `n1` treated units.
pub fn condition_on_counts<I>(draws: I, n1: usize) -> Vec<Assignment>
where
    I: IntoIterator<Item = Assignment>,
{
    draws.into_iter().filter(|a| a.n1() == n1).collect()
}

/// Precomputed Mahalanobis balance statistic
/// `dx' (n / (n1 n0) S_x^2)^-1 dx` for a fixed covariate block.
#[derive(Debug, Clone)]
pub struct BalanceMetric {
    x: DesignMatrix,
    precision: DMatrix<f64>,
    column_totals: Vec<f64>,
}

impl BalanceMetric {
    pub fn new(x: &DesignMatrix) -> Result<Self> {
        if x.ncols() == 0 {
            return Err(Error::SingularCovariance { ratio: 0.0 });
        }
        let s = finite_pop_covariance(x)?;
        let eig = SymmetricEigen::new(s);
        let largest = eig.eigenvalues.max();
        let smallest = eig.eigenvalues.min();
        if !(largest > 0.0) || smallest <= EIGEN_TOLERANCE * largest {
            let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
            return Err(Error::SingularCovariance { ratio });
        }
        let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
        let precision = &eig.eigenvectors * inv * eig.eigenvectors.transpose();
        let column_totals = x.columns().map(|c| c.iter().sum()).collect();
        Ok(Self {
            x: x.clone(),
            precision,
            column_totals,
        })
    }

    pub fn covariates(&self) -> &DesignMatrix {
        &self.x
    }

    pub fn balance(&self, assignment: &Assignment) -> Result<f64> {
        if assignment.n() != self.x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.x.nrows(),
                got: assignment.n(),
            });
        }
        let treated: Vec<usize> = (0..assignment.n()).filter(|&i| assignment.is_treated(i)).collect();
        Ok(self.balance_of_treated(&treated))
    }

    fn balance_of_treated(&self, treated: &[usize]) -> f64 {
        let n = self.x.nrows();
        let n1 = treated.len() as f64;
        let n0 = (n - treated.len()) as f64;
        let delta: Vec<f64> = self
            .x
            .columns()
            .zip(&self.column_totals)
            .map(|(c, total)| {
                let t: f64 = treated.iter().map(|&i| c[i]).sum();
                t / n1 - (total - t) / n0
            })
            .collect();
        let k = delta.len();
        let mut q = 0.0;
        for a in 0..k {
            for b in 0..k {
                q += delta[a] * self.precision[(a, b)] * delta[b];
            }
        }
        (n1 * n0 / n as f64 * q).max(0.0)
    }

    /// Rejection sampling from complete randomization until the balance
    /// statistic is at most `threshold_a`.
    pub fn rerandomize<R: Rng + ?Sized>(
        &self,
        n1: usize,
        threshold_a: f64,
        max_attempts: u64,
        rng: &mut R,
    ) -> Result<Rerandomization> {
        let n = self.x.nrows();
        DesignSpec::rerandomized(n, n1, threshold_a, max_attempts)?;
        let mut smallest = f64::INFINITY;
        for attempt in 1..=max_attempts {
            let treated = rand::seq::index::sample(rng, n, n1).into_vec();
            let m = self.balance_of_treated(&treated);
            if m <= threshold_a {
                return Ok(Rerandomization {
                    assignment: Assignment::from_treated(n, &treated)?,
                    attempts_used: attempt,
                    balance: m,
                });
            }
            smallest = smallest.min(m);
        }
        Err(Error::AcceptanceExhausted {
            attempts: max_attempts,
            smallest_balance: smallest,
        })
    }
}

/// Mahalanobis covariate balance of an assignment.
pub fn mahalanobis_balance(x: &DesignMatrix, assignment: &Assignment) -> Result<f64> {
    BalanceMetric::new(x)?.balance(assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rerandomization {
    pub assignment: Assignment,
    pub attempts_used: u64,
    pub balance: f64,
}

pub fn rerandomize<R: Rng + ?Sized>(
    x: &DesignMatrix,
    n1: usize,
    threshold_a: f64,
    max_attempts: u64,
    rng: &mut R,
) -> Result<Rerandomization> {
    BalanceMetric::new(x)?.rerandomize(n1, threshold_a, max_attempts, rng)
}

/// All `C(n, n1)` assignments in lexicographic order of treated indices.
pub fn enumerate_assignments(n: usize, n1: usize) -> Result<impl Iterator<Item = Assignment>> {
    check_counts(n, n1)?;
    Ok((0..n)
        .combinations(n1)
        .map(move |treated| Assignment::from_treated(n, &treated).expect("valid counts")))
}

/// One draw from a design together with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub assignment: Assignment,
    pub attempts: u64,
    pub balance: Option<f64>,
}

/// A design bound to its covariates, ready to draw repeatedly.
#[derive(Debug, Clone)]
pub struct AssignmentSampler {
    spec: DesignSpec,
    metric: Option<BalanceMetric>,
}

impl AssignmentSampler {
    pub fn new(spec: DesignSpec, x: &DesignMatrix) -> Result<Self> {
        spec.validate()?;
        if x.nrows() != spec.n {
            return Err(Error::DimensionMismatch {
                expected: spec.n,
                got: x.nrows(),
            });
        }
        let metric = match spec.kind {
            DesignKind::Rerandomized { .. } => Some(BalanceMetric::new(x)?),
            _ => None,
        };
        Ok(Self { spec, metric })
    }

    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn metric(&self) -> Option<&BalanceMetric> {
        self.metric.as_ref()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Draw> {
        match self.spec.kind {
            DesignKind::Complete { n1 } => Ok(Draw {
                assignment: complete_randomization(self.spec.n, n1, rng)?,
                attempts: 1,
                balance: None,
            }),
            DesignKind::Bernoulli { p } => {
                let d = bernoulli_assignment(self.spec.n, p, rng)?;
                Ok(Draw {
                    assignment: d.assignment,
                    attempts: d.rejections + 1,
                    balance: None,
                })
            }
            DesignKind::Rerandomized {
                n1,
                threshold_a,
                max_attempts,
            } => {
                let metric = self.metric.as_ref().expect("metric built for rerandomized designs");
                let r = metric.rerandomize(n1, threshold_a, max_attempts, rng)?;
                Ok(Draw {
                    assignment: r.assignment,
                    attempts: r.attempts_used,
                    balance: Some(r.balance),
                })
            }
        }
    }

    /// Support of the design with equal weights, for designs that are uniform
    /// on their support (complete randomization and rerandomization).
    pub fn enumerate(&self, limit_n: usize) -> Result<Vec<Assignment>> {
        if self.spec.n > limit_n {
            return Err(Error::NotEnumerable(format!(
                "n = {} exceeds the enumeration limit {limit_n}",
                self.spec.n
            )));
        }
        match self.spec.kind {
            DesignKind::Complete { n1 } => Ok(enumerate_assignments(self.spec.n, n1)?.collect()),
            DesignKind::Rerandomized { n1, threshold_a, .. } => {
                let metric = self.metric.as_ref().expect("metric built for rerandomized designs");
                let mut accepted = Vec::new();
                for a in enumerate_assignments(self.spec.n, n1)? {
                    if metric.balance(&a)? <= threshold_a {
                        accepted.push(a);
                    }
                }
                if accepted.is_empty() {
                    return Err(Error::NotEnumerable("acceptance region is empty".into()));
                }
                Ok(accepted)
            }
            DesignKind::Bernoulli { .. } => Err(Error::NotEnumerable(
                "Bernoulli designs are not uniform over a fixed-count support".into(),
            )),
        }
    }
}
