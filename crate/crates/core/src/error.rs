use thiserror::Error;

use crate::fixed_point::IterationState;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid plant: {0}")]
    InvalidPlant(String),

    #[error("disturbance input must be a single column, got {0}")]
    UnsupportedDisturbanceDim(usize),

    #[error("grid size {0} must be a power of two >= 4")]
    InvalidGrid(usize),

    #[error("grid of {n} samples is too coarse for state dimension {dx} (need >= {min})")]
    GridTooCoarse { n: usize, dx: usize, min: usize },

    #[error("A has an eigenvalue too close to the unit circle (|lambda| = {modulus})")]
    SingularResolvent { modulus: f64 },

    #[error("sample matrix at omega = {omega} is singular")]
    SingularSample { omega: f64 },

    #[error("shape or grid mismatch: {0}")]
    GridMismatch(String),

    #[error("(A, Bu) is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("spectrum is not strictly positive (min = {0:.3e})")]
    NonPositiveSpectrum(f64),

    #[error("polynomial is not strictly positive on the unit circle (min = {0:.3e})")]
    NotPositive(f64),

    #[error("spectral roots do not pair across the unit circle ({inside} of {total} inside)")]
    RootPairingFailure { inside: usize, total: usize },

    #[error("factor verification failed (residual = {residual:.3e})")]
    FactorizationFailure { residual: f64 },

    #[error("gamma = {gamma} is below the pointwise noncausal bound at omega = {omega}")]
    GammaTooSmall { gamma: f64, omega: f64 },

    #[error("fixed point hit max_iter = {max_iter} with residual {residual:.3e}")]
    MaxIterExceeded {
        max_iter: usize,
        residual: f64,
        best: Box<IterationState>,
    },

    #[error("fixed point did not converge at gamma = {gamma}: {detail}")]
    NonConverged {
        gamma: f64,
        detail: String,
        best: Option<Box<IterationState>>,
    },

    #[error("bisection bracket failure on [{lo}, {hi}]: {detail}")]
    BisectionBracketFailure { lo: f64, hi: f64, detail: String },

    #[error("projection solver stalled after {sweeps} sweeps (violation = {violation:.3e})")]
    SolverStall { sweeps: usize, violation: f64 },

    #[error(
        "Markov tail is too fat for a truncated-operator norm (tail {tail:.3e} vs head {head:.3e})"
    )]
    TailTooFat { tail: f64, head: f64 },

    #[error("normal equations are ill-conditioned (cond = {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidPlant(_) => "invalid_plant",
            Error::UnsupportedDisturbanceDim(_) => "unsupported_disturbance_dim",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridTooCoarse { .. } => "grid_too_coarse",
            Error::SingularResolvent { .. } => "singular_resolvent",
            Error::SingularSample { .. } => "singular_sample",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::NotStabilizable(_) => "not_stabilizable",
            Error::NonPositiveSpectrum(_) => "non_positive_spectrum",
            Error::NotPositive(_) => "not_positive",
            Error::RootPairingFailure { .. } => "root_pairing_failure",
            Error::FactorizationFailure { .. } => "factorization_failure",
            Error::GammaTooSmall { .. } => "gamma_too_small",
            Error::MaxIterExceeded { .. } => "max_iter_exceeded",
            Error::NonConverged { .. } => "non_converged",
            Error::BisectionBracketFailure { .. } => "bisection_bracket_failure",
            Error::SolverStall { .. } => "solver_stall",
            Error::TailTooFat { .. } => "tail_too_fat",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
