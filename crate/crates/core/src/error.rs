use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{coefficient} = {value:e} is not allowed for model {kind}: {reason}")]
    Gating {
        kind: crate::model::ModelKind,
        coefficient: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(
        "negative radicand in {field} quadratization: min F + C0 = {min_radicand:e} (min F = {min_potential:e})"
    )]
    NegativeRadicand {
        field: &'static str,
        min_potential: f64,
        min_radicand: f64,
    },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("linear solver failure: {0}")]
    Factorization(String),

    #[error("non-finite value in {0} at step {1}")]
    NonFinite(&'static str, u64),

    #[error("invalid scheme configuration: {0}")]
    InvalidScheme(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
