use thiserror::Error;

use crate::ep::FitDiagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite argument {0} passed to {1}")]
    NonFinite(f64, &'static str),

    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cavity breakdown at site {site}: 1 - k_i x_i'v_i = {denom:e}")]
    CavityBreakdown { site: usize, denom: f64 },

    #[error("update rejected at site {site}: 1 + dk x_i'v_i = {denom:e}")]
    UpdateRejected { site: usize, denom: f64 },

    #[error("no site could be updated during sweep {}", .diagnostics.sweeps_run)]
    NonProgress { diagnostics: Box<FitDiagnostics> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("quadratic form is numerically negative (u = {u:e}, tolerance {tolerance:e})")]
    NumericalBreakdown { u: f64, tolerance: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("posterior mass underflowed on the quadrature grid")]
    QuadratureUnderflow,

    #[error("sampler produced a non-finite draw at iteration {iteration}")]
    SamplerFault { iteration: usize },

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("scenario {scenario} at p = {p}: {source}")]
    InScenario {
        scenario: &'static str,
        p: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The innermost error, looking through scenario context.
    pub fn root(&self) -> &Error {
        match self {
            Error::InScenario { source, .. } => source.root(),
            other => other,
        }
    }
}
