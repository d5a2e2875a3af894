//! Constant-effect data-generating process with fixed, centred covariates.
//!
//! ```text
//! y_i(0) = alpha + beta' x_i + eps_i      eps_i IID, mean 0, variance sigma^2
//! y_i(1) = y_i(0) + tau
//! y_i    = z_i y_i(1) + (1 - z_i) y_i(0)
//! ```
//!
//! A [`Dataset`] keeps the latent errors and both potential outcomes next to the
//! observed data so that the estimator decompositions can be checked directly.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::designs::{AssignmentSampler, DesignSpec};
use crate::error::{Error, Result};
use crate::estimators::{finite_pop_covariance, Assignment};
use crate::ols::{self, DesignMatrix};
use crate::rng::RngStream;

/// Column means of stored covariates must be within this of zero.
pub const CENTERING_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorDist {
    Normal,
    /// Uniform on `[-sigma sqrt(3), sigma sqrt(3)]`.
    Uniform,
    /// `+sigma` or `-sigma` with equal probability.
    Rademacher,
}

impl ErrorDist {
    pub fn name(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Uniform => "uniform",
            Self::Rademacher => "rademacher",
        }
    }
}

impl fmt::Display for ErrorDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Self::Normal),
            "uniform" => Ok(Self::Uniform),
            "rademacher" | "rademacher-scaled" => Ok(Self::Rademacher),
            other => Err(Error::InvalidSpec(format!("unknown error distribution '{other}'"))),
        }
    }
}

/// Subtracts each column mean. Returns the centred block and the means removed.
pub fn center_covariates(x_raw: &DesignMatrix) -> Result<(DesignMatrix, Vec<f64>)> {
    if x_raw.nrows() < 2 {
        return Err(Error::DimensionError("centering needs at least two rows".into()));
    }
    if x_raw.ncols() == 0 {
        return Ok((x_raw.clone(), Vec::new()));
    }
    let mut offsets = Vec::with_capacity(x_raw.ncols());
    let cols: Vec<Vec<f64>> = x_raw
        .columns()
        .map(|c| {
            let m = ols::mean(c);
            offsets.push(m);
            let mut centered: Vec<f64> = c.iter().map(|v| v - m).collect();
            // one refinement pass removes the rounding left by the first
            let r = ols::mean(&centered);
            centered.iter_mut().for_each(|v| *v -= r);
            centered
        })
        .collect();
    let x = DesignMatrix::from_labelled_columns(&cols, x_raw.labels().to_vec())?;
    Ok((x, offsets))
}

/// `k` centred, mutually orthogonal covariate columns on `n` units, each with
/// finite-population variance exactly one (so `S_x^2 = I`). Built from an
/// orthogonalized polynomial basis on an even grid; deterministic.
pub fn standard_covariates(n: usize, k: usize) -> Result<DesignMatrix> {
    if k == 0 {
        return Ok(DesignMatrix::empty(n));
    }
    if n < k + 2 {
        return Err(Error::DimensionError(format!(
            "standard covariates need n >= k + 2 (n = {n}, k = {k})"
        )));
    }
    let grid: Vec<f64> = (0..n)
        .map(|i| (2.0 * i as f64 - (n - 1) as f64) / (n - 1) as f64)
        .collect();
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    for degree in 1..=k {
        let mut v: Vec<f64> = grid.iter().map(|t| t.powi(degree as i32)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(p, q)| p * q).sum();
                v.iter_mut().zip(b).for_each(|(p, q)| *p -= d * q);
            }
        }
        let norm = v.iter().map(|e| e * e).sum::<f64>().sqrt();
        v.iter_mut().for_each(|e| *e /= norm);
        basis.push(v);
    }
    let scale = ((n - 1) as f64).sqrt();
    let cols: Vec<Vec<f64>> = basis[1..]
        .iter()
        .map(|b| b.iter().map(|v| v * scale).collect())
        .collect();
    let (x, _) = center_covariates(&DesignMatrix::from_columns(&cols)?)?;
    Ok(x)
}

/// `n` IID errors with mean zero and variance `sigma^2`.
pub fn draw_errors<R: Rng + ?Sized>(n: usize, sigma: f64, dist: ErrorDist, rng: &mut R) -> Vec<f64> {
    match dist {
        ErrorDist::Normal => (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                sigma * e
            })
            .collect(),
        ErrorDist::Uniform => {
            let half = sigma * 3f64.sqrt();
            (0..n).map(|_| rng.random_range(-half..=half)).collect()
        }
        ErrorDist::Rademacher => (0..n)
            .map(|_| if rng.random_bool(0.5) { sigma } else { -sigma })
            .collect(),
    }
}

/// Full description of the data-generating process.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    x: DesignMatrix,
    offsets: Vec<f64>,
    alpha: f64,
    tau: f64,
    beta: Vec<f64>,
    sigma: f64,
    error_dist: ErrorDist,
    sampler: AssignmentSampler,
}

impl DgpSpec {
    /// Validates the parameters and centres `x_raw`.
    pub fn new(
        x_raw: &DesignMatrix,
        alpha: f64,
        tau: f64,
        beta: Vec<f64>,
        sigma: f64,
        error_dist: ErrorDist,
        design: DesignSpec,
    ) -> Result<Self> {
        if beta.len() != x_raw.ncols() {
            return Err(Error::InvalidSpec(format!(
                "beta has {} entries but there are {} covariates",
                beta.len(),
                x_raw.ncols()
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidSpec(format!("sigma = {sigma} must be positive and finite")));
        }
        if !alpha.is_finite() || !tau.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidSpec("alpha, tau and beta must be finite".into()));
        }
        if design.n != x_raw.nrows() {
            return Err(Error::InvalidSpec(format!(
                "design has n = {} but covariates have {} rows",
                design.n,
                x_raw.nrows()
            )));
        }
        let (x, offsets) = center_covariates(x_raw)?;
        let sampler = AssignmentSampler::new(design, &x)?;
        Ok(Self {
            x,
            offsets,
            alpha,
            tau,
            beta,
            sigma,
            error_dist,
            sampler,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn x(&self) -> &DesignMatrix {
        &self.x
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn error_dist(&self) -> ErrorDist {
        self.error_dist
    }

    pub fn design(&self) -> &DesignSpec {
        self.sampler.spec()
    }

    pub fn sampler(&self) -> &AssignmentSampler {
        &self.sampler
    }

    /// Same process with a different assignment design.
    pub fn with_design(&self, design: DesignSpec) -> Result<Self> {
        Ok(Self {
            sampler: AssignmentSampler::new(design, &self.x)?,
            ..self.clone()
        })
    }

    /// `beta' S_x^2 beta`, the outcome variance carried by the covariates.
    pub fn covariate_signal(&self) -> f64 {
        if self.beta.is_empty() {
            return 0.0;
        }
        let s = finite_pop_covariance(&self.x).expect("n >= 2 checked at construction");
        let k = self.beta.len();
        let mut q = 0.0;
        for a in 0..k {
            for b in 0..k {
                q += self.beta[a] * s[(a, b)] * self.beta[b];
            }
        }
        q
    }

    /// `beta' x_i` for every unit.
    pub fn linear_predictor(&self) -> Vec<f64> {
        let mut lp = vec![0.0; self.n()];
        for (c, b) in self.x.columns().zip(&self.beta) {
            lp.iter_mut().zip(c).for_each(|(acc, v)| *acc += b * v);
        }
        lp
    }

    pub fn draw_errors<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        draw_errors(self.n(), self.sigma, self.error_dist, rng)
    }
}

/// Realized data plus the latents that produced it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub assignment: Assignment,
    pub epsilon: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Draws used by the design to produce `assignment` (rejection designs).
    pub attempts: u64,
    spec: Arc<DgpSpec>,
}

impl Dataset {
    /// Assembles potential and observed outcomes from errors and an assignment.
    pub fn from_parts(spec: Arc<DgpSpec>, epsilon: Vec<f64>, assignment: Assignment) -> Result<Self> {
        let n = spec.n();
        if epsilon.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: epsilon.len(),
            });
        }
        if assignment.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: assignment.n(),
            });
        }
        if epsilon.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("epsilon"));
        }
        let lp = spec.linear_predictor();
        let y0: Vec<f64> = lp.iter().zip(&epsilon).map(|(l, e)| spec.alpha + l + e).collect();
        let y1: Vec<f64> = y0.iter().map(|v| v + spec.tau).collect();
        let y = observe(&y0, &y1, &assignment);
        Ok(Self {
            y,
            assignment,
            epsilon,
            y0,
            y1,
            attempts: 1,
            spec,
        })
    }

    pub fn spec(&self) -> &Arc<DgpSpec> {
        &self.spec
    }

    pub fn x(&self) -> &DesignMatrix {
        self.spec.x()
    }

    /// Writes `y, z, x_1..x_K, epsilon, y0, y1` with a header row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["y".to_string(), "z".to_string()];
        header.extend(self.x().labels().iter().cloned());
        header.extend(["epsilon", "y0", "y1"].map(String::from));
        out.write_record(&header)?;
        for i in 0..self.y.len() {
            let mut row = vec![self.y[i].to_string(), self.assignment.z()[i].to_string()];
            row.extend(self.x().row(i).iter().map(f64::to_string));
            row.extend([self.epsilon[i], self.y0[i], self.y1[i]].iter().map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

fn observe(y0: &[f64], y1: &[f64], assignment: &Assignment) -> Vec<f64> {
    assignment
        .z()
        .iter()
        .enumerate()
        .map(|(i, &z)| if z == 1 { y1[i] } else { y0[i] })
        .collect()
}

/// Draws errors from substream 0 and the assignment from substream 1.
pub fn generate(spec: &Arc<DgpSpec>, stream: RngStream) -> Result<Dataset> {
    let epsilon = spec.draw_errors(&mut stream.substream(0).rng());
    let draw = spec.sampler().draw(&mut stream.substream(1).rng())?;
    let mut ds = Dataset::from_parts(Arc::clone(spec), epsilon, draw.assignment)?;
    ds.attempts = draw.attempts;
    Ok(ds)
}

/// Fresh errors (substream 0), same assignment.
pub fn regenerate_errors(dataset: &Dataset, stream: RngStream) -> Dataset {
    let epsilon = dataset.spec.draw_errors(&mut stream.substream(0).rng());
    let mut ds = Dataset::from_parts(Arc::clone(&dataset.spec), epsilon, dataset.assignment.clone())
        .expect("dimensions unchanged");
    ds.attempts = dataset.attempts;
    ds
}

/// Fresh assignment (substream 1), same errors and potential outcomes.
pub fn regenerate_assignment(dataset: &Dataset, stream: RngStream) -> Result<Dataset> {
    let draw = dataset.spec.sampler().draw(&mut stream.substream(1).rng())?;
    Ok(with_assignment(dataset, draw.assignment, draw.attempts))
}

pub(crate) fn with_assignment(dataset: &Dataset, assignment: Assignment, attempts: u64) -> Dataset {
    Dataset {
        y: observe(&dataset.y0, &dataset.y1, &assignment),
        assignment,
        epsilon: dataset.epsilon.clone(),
        y0: dataset.y0.clone(),
        y1: dataset.y1.clone(),
        attempts,
        spec: Arc::clone(&dataset.spec),
    }
}

/// Observed data as read from a CSV with columns `y, z, x_1..x_K`.
#[derive(Debug, Clone)]
pub struct ObservedData {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub x: DesignMatrix,
}

/// Reads `y`, `z` and every column whose name starts with `x_`; other columns
/// (for example the latents written by [`Dataset::write_csv`]) are ignored.
pub fn read_observed_csv<R: Read>(r: R) -> Result<ObservedData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("missing column '{name}'")))
    };
    let (iy, iz) = (find("y")?, find("z")?);
    let ix: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("x_"))
        .map(|(i, _)| i)
        .collect();
    let (mut y, mut z) = (Vec::new(), Vec::new());
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); ix.len()];
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            let field = record.get(i).unwrap_or("");
            field.parse::<f64>().map_err(|_| {
                Error::Csv(format!("row {}: cannot parse '{field}' in column '{}'", line + 2, &headers[i]))
            })
        };
        y.push(parse(iy)?);
        z.push(parse(iz)?);
        for (c, &i) in cols.iter_mut().zip(&ix) {
            c.push(parse(i)?);
        }
    }
    if y.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    let x = if ix.is_empty() {
        DesignMatrix::empty(y.len())
    } else {
        let labels = ix.iter().map(|&i| headers[i].to_string()).collect();
        DesignMatrix::from_labelled_columns(&cols, labels)?
    };
    Ok(ObservedData { y, z, x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::DesignSpec;

    fn spec(beta: f64, tau: f64, dist: ErrorDist) -> Arc<DgpSpec> {
        let x = DesignMatrix::column_vector(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        Arc::new(
            DgpSpec::new(&x, 0.0, tau, vec![beta], 1.0, dist, DesignSpec::complete(6, 3).unwrap())
                .unwrap(),
        )
    }

    #[test]
    fn centering_examples() {
        let x = DesignMatrix::column_vector(&[1.0, 2.0, 3.0]).unwrap();
        let (c, off) = center_covariates(&x).unwrap();
        assert_eq!(c.column(0), &[-1.0, 0.0, 1.0]);
        assert_eq!(off, vec![2.0]);
        let (c2, off2) = center_covariates(&c).unwrap();
        assert_eq!(c2, c);
        assert_eq!(off2, vec![0.0]);
        let (c3, off3) = center_covariates(&DesignMatrix::column_vector(&[4.5; 3]).unwrap()).unwrap();
        assert_eq!(c3.column(0), &[0.0; 3]);
        assert_eq!(off3, vec![4.5]);
    }

    #[test]
    fn standard_covariates_have_identity_covariance() {
        let x = standard_covariates(100, 3).unwrap();
        let s = finite_pop_covariance(&x).unwrap();
        for a in 0..3 {
            assert!(ols::mean(x.column(a)).abs() < CENTERING_TOLERANCE);
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((s[(a, b)] - want).abs() < 1e-12, "S[{a},{b}] = {}", s[(a, b)]);
            }
        }
        assert!(standard_covariates(3, 2).is_err());
    }

    #[test]
    fn error_supports() {
        let mut rng = RngStream::new(1).rng();
        assert!(draw_errors(1000, 2.0, ErrorDist::Rademacher, &mut rng)
            .iter()
            .all(|&e| e == 2.0 || e == -2.0));
        let h = 3f64.sqrt();
        assert!(draw_errors(1000, 1.0, ErrorDist::Uniform, &mut rng)
            .iter()
            .all(|&e| (-h..=h).contains(&e)));
    }

    #[test]
    fn normal_errors_have_unit_variance() {
        let mut rng = RngStream::new(2).rng();
        let e = draw_errors(1_000_000, 1.0, ErrorDist::Normal, &mut rng);
        let m = ols::mean(&e);
        let v = e.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (e.len() - 1) as f64;
        assert!((0.99..=1.01).contains(&v), "variance {v}");
    }

    #[test]
    fn spec_validation() {
        let x = DesignMatrix::column_vector(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = DesignSpec::complete(4, 2).unwrap();
        assert!(DgpSpec::new(&x, 0.0, 1.0, vec![], 1.0, ErrorDist::Normal, d).is_err());
        assert!(DgpSpec::new(&x, 0.0, 1.0, vec![1.0], 0.0, ErrorDist::Normal, d).is_err());
        assert!(DgpSpec::new(&x, f64::NAN, 1.0, vec![1.0], 1.0, ErrorDist::Normal, d).is_err());
        let d5 = DesignSpec::complete(5, 2).unwrap();
        assert!(DgpSpec::new(&x, 0.0, 1.0, vec![1.0], 1.0, ErrorDist::Normal, d5).is_err());
        let s = DgpSpec::new(&x, 0.0, 1.0, vec![1.0], 1.0, ErrorDist::Normal, d).unwrap();
        assert_eq!(s.offsets(), &[2.5]);
        assert!(ols::mean(s.x().column(0)).abs() < CENTERING_TOLERANCE);
    }

    #[test]
    fn rademacher_supports_of_outcomes() {
        let s = spec(0.0, 1.0, ErrorDist::Rademacher);
        for r in 0..50 {
            let ds = generate(&s, RngStream::new(3).substream(r)).unwrap();
            for i in 0..6 {
                if ds.assignment.is_treated(i) {
                    assert!(ds.y[i] == 0.0 || ds.y[i] == 2.0);
                } else {
                    assert!(ds.y[i] == -1.0 || ds.y[i] == 1.0);
                }
            }
        }
    }

    #[test]
    fn zero_effect_potential_outcomes_coincide() {
        let ds = generate(&spec(1.5, 0.0, ErrorDist::Normal), RngStream::new(4)).unwrap();
        assert_eq!(ds.y0, ds.y1);
    }

    #[test]
    fn observation_rule_and_structure() {
        let s = spec(0.7, 2.0, ErrorDist::Uniform);
        let ds = generate(&s, RngStream::new(5)).unwrap();
        let lp = s.linear_predictor();
        for i in 0..6 {
            let z = f64::from(ds.assignment.z()[i]);
            assert_eq!(ds.y[i], if z == 1.0 { ds.y1[i] } else { ds.y0[i] });
            assert_eq!(ds.y0[i], s.alpha() + lp[i] + ds.epsilon[i]);
            assert!((ds.y1[i] - ds.y0[i] - 2.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn regeneration_preserves_frozen_parts() {
        let s = spec(0.7, 2.0, ErrorDist::Normal);
        let ds = generate(&s, RngStream::new(6)).unwrap();
        let e = regenerate_errors(&ds, RngStream::new(7));
        assert_eq!(e.assignment, ds.assignment);
        assert_ne!(e.epsilon, ds.epsilon);
        let a = regenerate_assignment(&ds, RngStream::new(8)).unwrap();
        assert_eq!(a.epsilon, ds.epsilon);
        assert_eq!(a.y0, ds.y0);
        assert_eq!(a.y1, ds.y1);
        for i in 0..6 {
            assert_eq!(a.y[i], if a.assignment.is_treated(i) { a.y1[i] } else { a.y0[i] });
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(0.7, 2.0, ErrorDist::Normal);
        let a = generate(&s, RngStream::new(9)).unwrap();
        let b = generate(&s, RngStream::new(9)).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.epsilon, b.epsilon);
    }

    #[test]
    fn csv_round_trip_of_observed_columns() {
        let ds = generate(&spec(0.7, 2.0, ErrorDist::Normal), RngStream::new(10)).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("y,z,x_1,epsilon,y0,y1\n"));
        let obs = read_observed_csv(buf.as_slice()).unwrap();
        assert_eq!(obs.y, ds.y);
        assert_eq!(obs.z, ds.assignment.indicator());
        assert_eq!(obs.x.column(0), ds.x().column(0));
    }

    #[test]
    fn csv_errors() {
        assert!(read_observed_csv("y,x_1\n1,2\n".as_bytes()).is_err());
        assert!(read_observed_csv("y,z\n1,abc\n".as_bytes()).is_err());
        assert!(read_observed_csv("y,z\n".as_bytes()).is_err());
    }
}
