use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("integer overflow while computing {0}")]
    Overflow(String),
    #[error("matrix is not unimodular (det = {det})")]
    NotUnimodular { det: i128 },
    #[error("matrix is not hyperbolic: eigenvalue modulus {modulus} lies within {tolerance} of 1")]
    NotHyperbolic { modulus: f64, tolerance: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{count} periodic points exceed the cap of {cap}")]
    TooManyPoints { count: u128, cap: u128 },
    #[error("bump constraint violated: {0}")]
    MeasureConstraint(String),
    #[error("root finder failed on [{lo}, {hi}] after {iterations} iterations (residual {residual})")]
    RootFind { lo: f64, hi: f64, iterations: usize, residual: f64 },
    #[error("no feasible parameters: {0}")]
    Infeasible(String),
    #[error("parameter too large: {0}")]
    ParameterTooLarge(String),
    #[error("orbit left the admissible region at step {step}: {reason}")]
    OrbitDiverged { step: usize, reason: String },
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("non-hyperbolic periodic orbit candidate of period {period}: multiplier {multiplier} is within {tolerance} of the unit circle")]
    NonHyperbolicCandidate { period: usize, multiplier: f64, tolerance: f64 },
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("incompatible fiber: {0}")]
    IncompatibleFiber(String),
}

pub type Result<T> = std::result::Result<T, Error>;
