//! Regime runners and variance-decomposition checks.
//!
//! Three conditioning regimes are simulated from one [`DgpSpec`]:
//!
//! - unconditional: fresh assignment and fresh errors every replication;
//! - conditional on `Z`: the assignment is frozen, errors are redrawn;
//! - conditional on `eps`: errors (hence potential outcomes) are frozen, the
//!   assignment is redrawn, or enumerated exactly for small designs.
//!
//! Replication `i` always draws from `stream.substream(i)` and results are
//! reduced in index order, so reports are bit-identical for any thread count.
//! Monte Carlo standard errors of variances use the fourth-central-moment
//! formula; equalities are checked within [`SE_BAND`] standard errors.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::designs::DesignKind;
use crate::dgp::{self, Dataset, DgpSpec};
use crate::error::{Error, Result};
use crate::estimators::{self, adjustment_block, covariate_imbalance, Assignment, EstimatorKind};
use crate::ols;
use crate::rng::RngStream;

pub const MIN_REPLICATIONS: usize = 1000;
pub const MIN_NESTED_REPLICATIONS: usize = 100;
pub const MIN_TABLE1_REPLICATIONS: usize = 10_000;
/// Designs with at most this many units are enumerated exactly when possible.
pub const ENUMERATION_LIMIT: usize = 12;
/// Width, in Monte Carlo standard errors, of every equality/inequality band.
pub const SE_BAND: f64 = 4.0;
/// Width of the band on law-of-total-variance gaps.
pub const DECOMPOSITION_BAND: f64 = 5.0;
pub const IMBALANCE_CANDIDATES: usize = 1000;
/// Covariate signal `beta' S_x^2 beta` at or below this fraction of `sigma^2`
/// marks a spec as having no covariate signal.
pub const DEGENERATE_SIGNAL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Unconditional,
    ConditionalOnZ,
    ConditionalOnEps,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Self::Unconditional => "unconditional",
            Self::ConditionalOnZ => "conditional_on_z",
            Self::ConditionalOnEps => "conditional_on_eps",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which randomness is frozen in a nested decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Conditioning {
    OnZ,
    OnEps,
}

impl Conditioning {
    pub fn name(self) -> &'static str {
        match self {
            Self::OnZ => "on_z",
            Self::OnEps => "on_eps",
        }
    }
}

/// Whether the conditional-on-`eps` runner may replace sampling by enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enumeration {
    /// Enumerate when `n <= ENUMERATION_LIMIT` and the design has a uniform
    /// fixed-count support; sample otherwise.
    Auto,
    /// Enumerate or fail with [`Error::NotEnumerable`].
    Require,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSummary {
    pub kind: EstimatorKind,
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
}

/// `var(first) - var(second)` with a paired standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceGap {
    pub first: EstimatorKind,
    pub second: EstimatorKind,
    pub difference: f64,
    pub se: f64,
}

/// Closed-form values, where the regime admits them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticReference {
    pub kind: EstimatorKind,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditioningPayload {
    None,
    Assignment {
        assignment: Assignment,
        /// Difference in covariate means under the frozen assignment.
        imbalance: Vec<f64>,
        /// `beta' imbalance`.
        conditional_bias: f64,
    },
    Errors(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub regime: Regime,
    pub replications: usize,
    /// Moments are exact over the enumerated design support.
    pub exact: bool,
    pub estimators: Vec<EstimatorSummary>,
    pub gaps: Vec<VarianceGap>,
    pub analytic: Vec<AnalyticReference>,
    pub payload: ConditioningPayload,
    /// Mean VIF of the realized assignments given the covariates.
    pub mean_vif: Option<f64>,
}

impl RegimeReport {
    pub fn summary(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.kind == kind)
    }

    pub fn analytic(&self, kind: EstimatorKind) -> Option<&AnalyticReference> {
        self.analytic.iter().find(|a| a.kind == kind)
    }

    /// `var(first) - var(second)`, in either stored orientation.
    pub fn gap(&self, first: EstimatorKind, second: EstimatorKind) -> Option<VarianceGap> {
        self.gaps.iter().find_map(|g| {
            if g.first == first && g.second == second {
                Some(*g)
            } else if g.first == second && g.second == first {
                Some(VarianceGap {
                    first,
                    second,
                    difference: -g.difference,
                    se: g.se,
                })
            } else {
                None
            }
        })
    }
}

/// Sample moments of a sequence, summed in order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let r = values.len();
        let rf = r as f64;
        let mean = values.iter().sum::<f64>() / rf;
        let (mut m2, mut m4) = (0.0, 0.0);
        for v in values {
            let d2 = (v - mean) * (v - mean);
            m2 += d2;
            m4 += d2 * d2;
        }
        let variance = if r > 1 { m2 / (rf - 1.0) } else { 0.0 };
        let (m2, m4) = (m2 / rf, m4 / rf);
        let var_of_var = if r > 3 {
            (m4 - m2 * m2 * (rf - 3.0) / (rf - 1.0)) / rf
        } else {
            f64::INFINITY
        };
        Self {
            count: r,
            mean,
            variance,
            se_mean: (variance / rf).sqrt(),
            se_variance: var_of_var.max(0.0).sqrt(),
        }
    }

    /// Exact mean and variance of a uniform distribution over `values`.
    pub fn exact(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            count: values.len(),
            mean,
            variance,
            se_mean: 0.0,
            se_variance: 0.0,
        }
    }
}

fn paired_gap(first: &[f64], second: &[f64]) -> (f64, f64) {
    let (ma, mb) = (Moments::of(first), Moments::of(second));
    let u: Vec<f64> = first
        .iter()
        .zip(second)
        .map(|(a, b)| (a - ma.mean).powi(2) - (b - mb.mean).powi(2))
        .collect();
    (ma.variance - mb.variance, Moments::of(&u).se_mean)
}

fn replicate<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(f).collect()
}

fn check_replications(got: usize, min: usize) -> Result<()> {
    if got < min {
        return Err(Error::TooFewReplications { min, got });
    }
    Ok(())
}

struct Replicate {
    estimates: Vec<f64>,
    vif: Option<f64>,
}

fn evaluate(kinds: &[EstimatorKind], ds: &Dataset, with_vif: bool) -> Result<Replicate> {
    let estimates = kinds
        .iter()
        .map(|&k| Ok(estimators::estimate(k, &ds.y, &ds.assignment, ds.x(), false)?.tau_hat))
        .collect::<Result<Vec<_>>>()?;
    let vif = if with_vif && ds.x().ncols() > 0 {
        Some(ols::vif(&ds.assignment.indicator(), ds.x())?)
    } else {
        None
    };
    Ok(Replicate { estimates, vif })
}

fn assemble(
    regime: Regime,
    kinds: &[EstimatorKind],
    rows: &[Replicate],
    exact: bool,
    analytic: Vec<AnalyticReference>,
    payload: ConditioningPayload,
) -> RegimeReport {
    let columns: Vec<Vec<f64>> = (0..kinds.len())
        .map(|j| rows.iter().map(|r| r.estimates[j]).collect())
        .collect();
    let estimators = kinds
        .iter()
        .zip(&columns)
        .map(|(&kind, col)| {
            let m = if exact { Moments::exact(col) } else { Moments::of(col) };
            EstimatorSummary {
                kind,
                mean: m.mean,
                variance: m.variance,
                se_mean: m.se_mean,
                se_variance: m.se_variance,
            }
        })
        .collect();
    let mut gaps = Vec::new();
    for a in 0..kinds.len() {
        for b in a + 1..kinds.len() {
            let (difference, se) = if exact {
                (
                    Moments::exact(&columns[a]).variance - Moments::exact(&columns[b]).variance,
                    0.0,
                )
            } else {
                paired_gap(&columns[a], &columns[b])
            };
            gaps.push(VarianceGap {
                first: kinds[a],
                second: kinds[b],
                difference,
                se,
            });
        }
    }
    let vifs: Vec<f64> = rows.iter().filter_map(|r| r.vif).collect();
    let mean_vif = (!vifs.is_empty()).then(|| vifs.iter().sum::<f64>() / vifs.len() as f64);
    RegimeReport {
        regime,
        replications: rows.len(),
        exact,
        estimators,
        gaps,
        analytic,
        payload,
        mean_vif,
    }
}

fn is_complete(spec: &DgpSpec) -> bool {
    matches!(spec.design().kind, DesignKind::Complete { .. })
}

/// `n / (n1 n0)` for fixed-count designs.
fn design_scale(spec: &DgpSpec) -> Option<f64> {
    spec.design()
        .fixed_n1()
        .map(|n1| spec.n() as f64 / (n1 as f64 * (spec.n() - n1) as f64))
}

/// Exact `var(tau_hat)` under complete randomization:
/// `n / (n1 n0) (sigma^2 + beta' S_x^2 beta)`.
pub fn unconditional_variance_unadjusted(spec: &DgpSpec) -> Option<f64> {
    if !is_complete(spec) {
        return None;
    }
    design_scale(spec).map(|s| s * (spec.sigma().powi(2) + spec.covariate_signal()))
}

/// Fresh assignment and errors every replication.
pub fn run_unconditional(
    spec: &Arc<DgpSpec>,
    kinds: &[EstimatorKind],
    replications: usize,
    stream: RngStream,
) -> Result<RegimeReport> {
    check_replications(replications, MIN_REPLICATIONS)?;
    let rows = replicate(replications, |i| {
        let ds = dgp::generate(spec, stream.substream(i))?;
        evaluate(kinds, &ds, true)
    })?;
    let analytic = kinds
        .iter()
        .map(|&kind| match kind {
            EstimatorKind::Unadjusted => AnalyticReference {
                kind,
                mean: is_complete(spec).then(|| spec.tau()),
                variance: unconditional_variance_unadjusted(spec),
            },
            _ => AnalyticReference {
                kind,
                mean: Some(spec.tau()),
                variance: None,
            },
        })
        .collect();
    Ok(assemble(
        Regime::Unconditional,
        kinds,
        &rows,
        false,
        analytic,
        ConditioningPayload::None,
    ))
}

/// Closed-form moments given a frozen assignment. Every estimator is the `z`
/// coefficient of a regression on fixed regressors, so its variance is
/// `sigma^2 / sum(res^2)` with `res` the residual of `z` on `(1, block)`.
pub fn conditional_on_z_reference(
    spec: &DgpSpec,
    assignment: &Assignment,
    kind: EstimatorKind,
) -> Result<AnalyticReference> {
    let z = assignment.indicator();
    let block = adjustment_block(kind, assignment, spec.x())?;
    let res = ols::fwl_residualize(&z, &block)?;
    let ss: f64 = res.iter().map(|e| e * e).sum();
    let mean = match kind {
        EstimatorKind::Unadjusted => spec.tau() + conditional_bias(spec, assignment)?,
        _ => spec.tau(),
    };
    Ok(AnalyticReference {
        kind,
        mean: Some(mean),
        variance: Some(spec.sigma().powi(2) / ss),
    })
}

/// `beta' dx`, the bias of the difference in means given the assignment.
pub fn conditional_bias(spec: &DgpSpec, assignment: &Assignment) -> Result<f64> {
    let dx = covariate_imbalance(spec.x(), assignment)?;
    Ok(dx.iter().zip(spec.beta()).map(|(d, b)| d * b).sum())
}

/// Assignment frozen, errors redrawn.
pub fn run_conditional_on_z(
    spec: &Arc<DgpSpec>,
    frozen: &Assignment,
    kinds: &[EstimatorKind],
    replications: usize,
    stream: RngStream,
) -> Result<RegimeReport> {
    check_replications(replications, MIN_REPLICATIONS)?;
    let base = Dataset::from_parts(Arc::clone(spec), vec![0.0; spec.n()], frozen.clone())?;
    let rows = replicate(replications, |i| {
        let ds = dgp::regenerate_errors(&base, stream.substream(i));
        evaluate(kinds, &ds, false)
    })?;
    let analytic = kinds
        .iter()
        .map(|&k| conditional_on_z_reference(spec, frozen, k))
        .collect::<Result<Vec<_>>>()?;
    let mut report = assemble(
        Regime::ConditionalOnZ,
        kinds,
        &rows,
        false,
        analytic,
        ConditioningPayload::Assignment {
            assignment: frozen.clone(),
            imbalance: covariate_imbalance(spec.x(), frozen)?,
            conditional_bias: conditional_bias(spec, frozen)?,
        },
    );
    if spec.x().ncols() > 0 {
        report.mean_vif = Some(ols::vif(&frozen.indicator(), spec.x())?);
    }
    Ok(report)
}

/// Errors frozen, assignment redrawn (or enumerated).
pub fn run_conditional_on_eps(
    spec: &Arc<DgpSpec>,
    frozen_eps: &[f64],
    kinds: &[EstimatorKind],
    replications: usize,
    enumeration: Enumeration,
    stream: RngStream,
) -> Result<RegimeReport> {
    let support = match enumeration {
        Enumeration::Never => None,
        Enumeration::Require => Some(spec.sampler().enumerate(ENUMERATION_LIMIT)?),
        Enumeration::Auto => spec.sampler().enumerate(ENUMERATION_LIMIT).ok(),
    };
    let exact = support.is_some();
    let rows = match &support {
        Some(assignments) => {
            let base = Dataset::from_parts(Arc::clone(spec), frozen_eps.to_vec(), assignments[0].clone())?;
            assignments
                .par_iter()
                .map(|a| evaluate(kinds, &dgp::with_assignment(&base, a.clone(), 1), true))
                .collect::<Result<Vec<_>>>()?
        }
        None => {
            check_replications(replications, MIN_REPLICATIONS)?;
            let first = spec.sampler().draw(&mut stream.substream(0).substream(1).rng())?;
            let base = Dataset::from_parts(Arc::clone(spec), frozen_eps.to_vec(), first.assignment)?;
            replicate(replications, |i| {
                let ds = dgp::regenerate_assignment(&base, stream.substream(i))?;
                evaluate(kinds, &ds, true)
            })?
        }
    };
    let y0: Vec<f64> = {
        let lp = spec.linear_predictor();
        lp.iter().zip(frozen_eps).map(|(l, e)| spec.alpha() + l + e).collect()
    };
    let analytic = kinds
        .iter()
        .map(|&kind| match (kind, is_complete(spec)) {
            (EstimatorKind::Unadjusted, true) => AnalyticReference {
                kind,
                mean: Some(spec.tau()),
                variance: design_scale(spec)
                    .map(|s| s * ols::centered_sum_of_squares(&y0) / (spec.n() - 1) as f64),
            },
            _ => AnalyticReference {
                kind,
                mean: None,
                variance: None,
            },
        })
        .collect();
    Ok(assemble(
        Regime::ConditionalOnEps,
        kinds,
        &rows,
        exact,
        analytic,
        ConditioningPayload::Errors(frozen_eps.to_vec()),
    ))
}

/// Law-of-total-variance check for one estimator under one conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub estimator: EstimatorKind,
    pub conditioning: Conditioning,
    pub outer_replications: usize,
    pub inner_replications: usize,
    /// `var(estimator)` from independent full draws.
    pub outer_variance: f64,
    pub se_outer_variance: f64,
    /// `E{var(estimator | C)}`.
    pub mean_inner_variance: f64,
    pub se_mean_inner_variance: f64,
    /// `var{E(estimator | C)}`, corrected for the noise in the inner means.
    pub variance_of_inner_mean: f64,
    pub se_variance_of_inner_mean: f64,
    /// `outer - (mean_inner + variance_of_inner_mean)`.
    pub gap: f64,
    pub se_gap: f64,
    pub analytic_variance_of_inner_mean: Option<f64>,
}

impl DecompositionReport {
    pub fn gap_within_band(&self) -> bool {
        self.gap.abs() <= DECOMPOSITION_BAND * self.se_gap
    }

    /// `variance_of_inner_mean` is within [`SE_BAND`] standard errors of `value`.
    pub fn inner_mean_variance_matches(&self, value: f64) -> bool {
        (self.variance_of_inner_mean - value).abs() <= SE_BAND * self.se_variance_of_inner_mean
    }
}

pub fn total_variance_decomposition(
    spec: &Arc<DgpSpec>,
    estimator: EstimatorKind,
    outer: usize,
    inner: usize,
    conditioning: Conditioning,
    stream: RngStream,
) -> Result<DecompositionReport> {
    check_replications(outer, MIN_NESTED_REPLICATIONS)?;
    check_replications(inner, MIN_NESTED_REPLICATIONS)?;
    let kinds = [estimator];

    let full_stream = stream.substream(0);
    let full = replicate(outer * inner, |i| {
        let ds = dgp::generate(spec, full_stream.substream(i))?;
        Ok(evaluate(&kinds, &ds, false)?.estimates[0])
    })?;
    let full_m = Moments::of(&full);

    let nested_stream = stream.substream(1);
    let cells = replicate(outer, |k| {
        let s = nested_stream.substream(k);
        let base = dgp::generate(spec, s.substream(0))?;
        let draws = (0..inner as u64)
            .map(|j| {
                let t = s.substream(1).substream(j);
                let ds = match conditioning {
                    Conditioning::OnZ => dgp::regenerate_errors(&base, t),
                    Conditioning::OnEps => dgp::regenerate_assignment(&base, t)?,
                };
                Ok(evaluate(&kinds, &ds, false)?.estimates[0])
            })
            .collect::<Result<Vec<f64>>>()?;
        let m = Moments::of(&draws);
        Ok((m.mean, m.variance))
    })?;
    let means: Vec<f64> = cells.iter().map(|c| c.0).collect();
    let vars: Vec<f64> = cells.iter().map(|c| c.1).collect();
    let mean_m = Moments::of(&means);
    let var_m = Moments::of(&vars);
    let inner_f = inner as f64;
    let outer_f = outer as f64;

    let mean_inner_variance = var_m.mean;
    let variance_of_inner_mean = mean_m.variance - mean_inner_variance / inner_f;
    let se_variance_of_inner_mean = (mean_m.se_variance.powi(2) + (var_m.se_mean / inner_f).powi(2)).sqrt();

    let contributions: Vec<f64> = cells
        .iter()
        .map(|(m, v)| {
            v * (1.0 - 1.0 / inner_f) + (m - mean_m.mean).powi(2) * outer_f / (outer_f - 1.0)
        })
        .collect();
    let se_total = Moments::of(&contributions).se_mean;
    let gap = full_m.variance - (mean_inner_variance + variance_of_inner_mean);

    let analytic_variance_of_inner_mean = match (conditioning, estimator, is_complete(spec)) {
        (Conditioning::OnZ, EstimatorKind::Unadjusted, true) => {
            design_scale(spec).map(|s| s * spec.covariate_signal())
        }
        (Conditioning::OnZ, _, _) => Some(0.0),
        (Conditioning::OnEps, EstimatorKind::Unadjusted, true) => Some(0.0),
        _ => None,
    };

    Ok(DecompositionReport {
        estimator,
        conditioning,
        outer_replications: outer,
        inner_replications: inner,
        outer_variance: full_m.variance,
        se_outer_variance: full_m.se_variance,
        mean_inner_variance,
        se_mean_inner_variance: var_m.se_mean,
        variance_of_inner_mean,
        se_variance_of_inner_mean,
        gap,
        se_gap: (full_m.se_variance.powi(2) + se_total.powi(2)).sqrt(),
        analytic_variance_of_inner_mean,
    })
}

/// The candidate assignment with the largest `|beta' dx|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalancedAssignment {
    pub assignment: Assignment,
    pub imbalance: Vec<f64>,
    pub conditional_bias: f64,
    pub candidate_index: usize,
}

/// Draws `candidates` assignments from the spec's design and keeps the one with
/// the largest absolute conditional bias (earliest on ties).
pub fn select_imbalanced_assignment(
    spec: &DgpSpec,
    candidates: usize,
    stream: RngStream,
) -> Result<ImbalancedAssignment> {
    if candidates == 0 {
        return Err(Error::TooFewReplications { min: 1, got: 0 });
    }
    let draws = replicate(candidates, |i| {
        let a = spec.sampler().draw(&mut stream.substream(i).rng())?.assignment;
        let bias = conditional_bias(spec, &a)?;
        Ok((a, bias))
    })?;
    let (idx, _) = draws
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, (_, b))| {
            if b.abs() > best.1 {
                (i, b.abs())
            } else {
                best
            }
        });
    let (assignment, conditional_bias) = draws[idx].clone();
    Ok(ImbalancedAssignment {
        imbalance: covariate_imbalance(spec.x(), &assignment)?,
        assignment,
        conditional_bias,
        candidate_index: idx,
    })
}

/// Distribution of `est_var(ancova) / est_var(unadjusted)` across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedVarianceSummary {
    pub replications: usize,
    pub mean: f64,
    pub median: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
    pub fraction_below_one: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn estimated_variance_comparison(
    spec: &Arc<DgpSpec>,
    replications: usize,
    stream: RngStream,
) -> Result<EstimatedVarianceSummary> {
    check_replications(replications, MIN_REPLICATIONS)?;
    let ratios = replicate(replications, |i| {
        let ds = dgp::generate(spec, stream.substream(i))?;
        let z = ds.assignment.indicator();
        let adjusted = ols::estimated_variance_adjusted(&ds.y, &z, ds.x())?;
        let unadjusted = ols::estimated_variance_unadjusted(&ds.y, &z)?;
        Ok(adjusted / unadjusted)
    })?;
    let below = ratios.iter().filter(|&&r| r < 1.0).count();
    let mean = Moments::of(&ratios).mean;
    let mut sorted = ratios;
    sorted.sort_by(f64::total_cmp);
    Ok(EstimatedVarianceSummary {
        replications,
        mean,
        median: quantile(&sorted, 0.5),
        lower_quartile: quantile(&sorted, 0.25),
        upper_quartile: quantile(&sorted, 0.75),
        fraction_below_one: below as f64 / replications as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Table1Column {
    MeanAdjusted,
    MeanUnadjusted,
    VarianceComparison,
}

impl Table1Column {
    pub const ALL: [Table1Column; 3] = [Self::MeanAdjusted, Self::MeanUnadjusted, Self::VarianceComparison];

    pub fn name(self) -> &'static str {
        match self {
            Self::MeanAdjusted => "mean_ancova",
            Self::MeanUnadjusted => "mean_unadjusted",
            Self::VarianceComparison => "variance_comparison",
        }
    }
}

/// One qualitative claim of the summary table, checked numerically.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Cell {
    pub regime: Regime,
    pub column: Table1Column,
    pub claim: &'static str,
    pub observed: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Report {
    pub replications: usize,
    /// `beta' S_x^2 beta`.
    pub covariate_signal: f64,
    /// No covariate signal: orderings are checked as equalities.
    pub degenerate: bool,
    pub frozen: ImbalancedAssignment,
    pub unconditional: RegimeReport,
    pub conditional_on_z: RegimeReport,
    pub conditional_on_eps: RegimeReport,
    pub cells: Vec<Table1Cell>,
}

impl Table1Report {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn passed(&self) -> usize {
        self.cells.iter().filter(|c| c.pass).count()
    }

    pub fn cell(&self, regime: Regime, column: Table1Column) -> &Table1Cell {
        self.cells
            .iter()
            .find(|c| c.regime == regime && c.column == column)
            .expect("all nine cells are populated")
    }
}

fn equality_cell(
    regime: Regime,
    column: Table1Column,
    claim: &'static str,
    summary: &EstimatorSummary,
    reference: f64,
) -> Table1Cell {
    let tolerance = SE_BAND * summary.se_mean;
    Table1Cell {
        regime,
        column,
        claim,
        observed: summary.mean,
        reference,
        tolerance,
        pass: (summary.mean - reference).abs() <= tolerance,
    }
}

/// `var(unadjusted) - var(ancova)`. With covariate signal the gap must exceed
/// [`SE_BAND`] paired standard errors. Without signal the two variances must
/// agree within [`SE_BAND`] combined standard errors of the variances
/// themselves: the paired error is small enough to resolve the `O(K/n)`
/// finite-sample difference between the estimators.
fn ordering_cell(regime: Regime, report: &RegimeReport, degenerate: bool) -> Table1Cell {
    let gap = report
        .gap(EstimatorKind::Unadjusted, EstimatorKind::Ancova)
        .expect("both estimators are run");
    if degenerate {
        let se_u = report.summary(EstimatorKind::Unadjusted).expect("run").se_variance;
        let se_a = report.summary(EstimatorKind::Ancova).expect("run").se_variance;
        let tolerance = SE_BAND * (se_u * se_u + se_a * se_a).sqrt();
        Table1Cell {
            regime,
            column: Table1Column::VarianceComparison,
            claim: "var(ancova) = var(unadjusted) within Monte Carlo error (no covariate signal)",
            observed: gap.difference,
            reference: 0.0,
            tolerance,
            pass: gap.difference.abs() <= tolerance,
        }
    } else {
        let tolerance = SE_BAND * gap.se;
        Table1Cell {
            regime,
            column: Table1Column::VarianceComparison,
            claim: "var(ancova) < var(unadjusted)",
            observed: gap.difference,
            reference: 0.0,
            tolerance,
            pass: gap.difference > tolerance,
        }
    }
}

/// Runs all three regimes and checks the nine cells of the summary table.
///
/// The conditional-on-`Z` row freezes the most imbalanced of
/// [`IMBALANCE_CANDIDATES`] draws so that the conditional bias is visible. The
/// conditional-on-`eps` row always samples (the cells carry asymptotic claims).
pub fn table1_report(spec: &Arc<DgpSpec>, replications: usize, stream: RngStream) -> Result<Table1Report> {
    check_replications(replications, MIN_TABLE1_REPLICATIONS)?;
    let kinds = [EstimatorKind::Ancova, EstimatorKind::Unadjusted];
    let tau = spec.tau();
    let signal = spec.covariate_signal();
    let degenerate = signal <= DEGENERATE_SIGNAL * spec.sigma().powi(2);

    let unconditional = run_unconditional(spec, &kinds, replications, stream.substream(0))?;
    let frozen = select_imbalanced_assignment(spec, IMBALANCE_CANDIDATES, stream.substream(1))?;
    let conditional_on_z =
        run_conditional_on_z(spec, &frozen.assignment, &kinds, replications, stream.substream(2))?;
    let frozen_eps = spec.draw_errors(&mut stream.substream(3).rng());
    let conditional_on_eps = run_conditional_on_eps(
        spec,
        &frozen_eps,
        &kinds,
        replications,
        Enumeration::Never,
        stream.substream(4),
    )?;

    let a = EstimatorKind::Ancova;
    let u = EstimatorKind::Unadjusted;
    let s = |r: &RegimeReport, k| *r.summary(k).expect("estimator was run");
    let mut cells = Vec::with_capacity(9);

    cells.push(equality_cell(
        Regime::Unconditional,
        Table1Column::MeanAdjusted,
        "E(ancova) = tau",
        &s(&unconditional, a),
        tau,
    ));
    cells.push(equality_cell(
        Regime::Unconditional,
        Table1Column::MeanUnadjusted,
        "E(unadjusted) = tau",
        &s(&unconditional, u),
        tau,
    ));
    cells.push(ordering_cell(Regime::Unconditional, &unconditional, degenerate));

    cells.push(equality_cell(
        Regime::ConditionalOnZ,
        Table1Column::MeanAdjusted,
        "E(ancova | Z) = tau",
        &s(&conditional_on_z, a),
        tau,
    ));
    cells.push(equality_cell(
        Regime::ConditionalOnZ,
        Table1Column::MeanUnadjusted,
        "E(unadjusted | Z) = tau + beta' dx",
        &s(&conditional_on_z, u),
        tau + frozen.conditional_bias,
    ));
    {
        let var_a = conditional_on_z.analytic(a).and_then(|r| r.variance).expect("closed form");
        let var_u = conditional_on_z.analytic(u).and_then(|r| r.variance).expect("closed form");
        let gap = conditional_on_z.gap(a, u).expect("both estimators are run");
        let tolerance = SE_BAND * gap.se;
        cells.push(Table1Cell {
            regime: Regime::ConditionalOnZ,
            column: Table1Column::VarianceComparison,
            claim: "var(ancova | Z) >= var(unadjusted | Z) exactly; Monte Carlo gap matches",
            observed: gap.difference,
            reference: var_a - var_u,
            tolerance,
            pass: var_a >= var_u && (gap.difference - (var_a - var_u)).abs() <= tolerance,
        });
    }

    cells.push(equality_cell(
        Regime::ConditionalOnEps,
        Table1Column::MeanAdjusted,
        "E(ancova | eps) ~ tau",
        &s(&conditional_on_eps, a),
        tau,
    ));
    cells.push(equality_cell(
        Regime::ConditionalOnEps,
        Table1Column::MeanUnadjusted,
        "E(unadjusted | eps) = tau",
        &s(&conditional_on_eps, u),
        tau,
    ));
    cells.push(ordering_cell(Regime::ConditionalOnEps, &conditional_on_eps, degenerate));

    Ok(Table1Report {
        replications,
        covariate_signal: signal,
        degenerate,
        frozen,
        unconditional,
        conditional_on_z,
        conditional_on_eps,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_known_sequence() {
        let m = Moments::of(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m.mean, 3.0);
        assert_eq!(m.variance, 2.5);
        assert!((m.se_mean - (0.5f64).sqrt()).abs() < 1e-15);
        let e = Moments::exact(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(e.variance, 2.0);
        assert_eq!(e.se_variance, 0.0);
    }

    #[test]
    fn variance_standard_error_for_normal_data() {
        // For normal data the fourth-moment formula approaches sigma^2 sqrt(2 / R).
        let mut rng = RngStream::new(11).rng();
        let v = crate::dgp::draw_errors(200_000, 1.0, crate::dgp::ErrorDist::Normal, &mut rng);
        let m = Moments::of(&v);
        let want = (2.0 / 200_000f64).sqrt();
        assert!((m.se_variance / want - 1.0).abs() < 0.05);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.5);
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 1.0), 4.0);
        assert_eq!(quantile(&s, 0.25), 1.75);
    }

    #[test]
    fn paired_gap_of_identical_columns_is_zero() {
        let a = [0.3, -1.0, 2.0, 0.4];
        assert_eq!(paired_gap(&a, &a), (0.0, 0.0));
    }
}
