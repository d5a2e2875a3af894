use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("design matrix is rank deficient (collinear columns)")]
    RankDeficient,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid dimensions: {0}")]
    DimensionError(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("treatment is perfectly explained by the covariates (R^2 = 1)")]
    PerfectCollinearity,

    #[error("constant treatment column")]
    ConstantTreatment,

    #[error("insufficient degrees of freedom: n = {n}, parameters = {params}")]
    InsufficientDof { n: usize, params: usize },

    #[error("degenerate assignment: n1 = {n1}, n0 = {n0}")]
    DegenerateAssignment { n1: usize, n0: usize },

    #[error("assignment entries must be 0 or 1 (found {value} at index {index})")]
    NonBinaryAssignment { index: usize, value: f64 },

    #[error("invalid counts: n = {n}, n1 = {n1} (need 1 <= n1 <= n - 1)")]
    InvalidCounts { n: usize, n1: usize },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid data-generating process: {0}")]
    InvalidSpec(String),

    #[error("covariate covariance matrix is singular (eigenvalue ratio {ratio:e})")]
    SingularCovariance { ratio: f64 },

    #[error("no assignment accepted after {attempts} attempts (smallest balance statistic {smallest_balance})")]
    AcceptanceExhausted {
        attempts: u64,
        smallest_balance: f64,
    },

    #[error("{draws} consecutive Bernoulli draws were degenerate (all treated or all control)")]
    BernoulliExhausted { draws: u64 },

    #[error("need at least {min} replications, got {got}")]
    TooFewReplications { min: usize, got: usize },

    #[error("exhaustive enumeration unavailable: {0}")]
    NotEnumerable(String),

    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
