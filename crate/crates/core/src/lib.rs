//! Covariate adjustment in randomized experiments under three conditioning regimes.
//!
//! The crate is organised bottom-up:
//!
//! - [`ols`]: pivoted-QR least squares, Frisch–Waugh–Lovell residualization,
//!   variance inflation factors and the classical estimated variances.
//! - [`estimators`]: difference in means, ANCOVA and interacted (Lin) estimators,
//!   finite-population covariance.
//! - [`designs`]: complete randomization, Bernoulli assignment, rerandomization
//!   under a Mahalanobis balance criterion, and exhaustive enumeration.
//! - [`dgp`]: the constant-effect data-generating process with latent errors and
//!   potential outcomes kept alongside the observed data.
//! - [`montecarlo`]: regime runners (unconditional, conditional on the assignment,
//!   conditional on the errors), law-of-total-variance decompositions and the
//!   summary table.
//! - [`report`]: versioned text and CSV serialization of reports.
//!
//! All randomness flows through [`rng::RngStream`], so every result is a pure
//! function of a 64-bit seed regardless of thread count.

pub mod designs;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod montecarlo;
pub mod ols;
pub mod report;
pub mod rng;

pub use designs::{DesignKind, DesignSpec};
pub use dgp::{Dataset, DgpSpec, ErrorDist};
pub use error::{Error, Result};
pub use estimators::{Assignment, EstimatorKind, EstimatorResult};
pub use ols::{DesignMatrix, OlsFit};
pub use rng::RngStream;
