#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use vif_ancova::dgp::standard_covariates;
use vif_ancova::{Assignment, DesignMatrix, DesignSpec, DgpSpec, ErrorDist, RngStream};

pub fn normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn normal_matrix(rng: &mut impl Rng, n: usize, k: usize) -> DesignMatrix {
    let cols: Vec<Vec<f64>> = (0..k).map(|_| normals(rng, n)).collect();
    DesignMatrix::from_columns(&cols).unwrap()
}

/// Binary assignment with at least two units in each arm.
pub fn random_assignment(rng: &mut impl Rng, n: usize) -> Assignment {
    loop {
        let z: Vec<u8> = (0..n).map(|_| rng.random_bool(0.5) as u8).collect();
        let n1 = z.iter().filter(|&&v| v == 1).count();
        if n1 >= 2 && n - n1 >= 2 {
            return Assignment::new(z).unwrap();
        }
    }
}

pub struct Instance {
    pub y: Vec<f64>,
    pub assignment: Assignment,
    pub x: DesignMatrix,
}

pub fn random_instance(seed: u64, n: usize, k: usize) -> Instance {
    let mut rng = RngStream::new(seed).rng();
    let x = normal_matrix(&mut rng, n, k);
    let assignment = random_assignment(&mut rng, n);
    let y = normals(&mut rng, n);
    Instance { y, assignment, x }
}

pub fn spec(x: &DesignMatrix, tau: f64, beta: Vec<f64>, sigma: f64, dist: ErrorDist, design: DesignSpec) -> Arc<DgpSpec> {
    Arc::new(DgpSpec::new(x, 0.0, tau, beta, sigma, dist, design).unwrap())
}

/// n = 100, n1 = 50, two covariates with identity finite-population covariance,
/// beta = (1, 0.5), sigma = 1.
pub fn default_spec() -> Arc<DgpSpec> {
    let x = standard_covariates(100, 2).unwrap();
    spec(
        &x,
        1.0,
        vec![1.0, 0.5],
        1.0,
        ErrorDist::Normal,
        DesignSpec::complete(100, 50).unwrap(),
    )
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn centered(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}
