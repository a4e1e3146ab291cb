//! Error types shared across the crate.

use thiserror::Error;

/// Violation of a property-function validity window.
#[derive(Debug, Clone, Error)]
#[error("{function}: {coordinate} = {value} outside validity window [{min}, {max}]")]
pub struct RangeViolation {
    pub function: &'static str,
    pub coordinate: &'static str,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Error)]
pub enum AhpdError {
    #[error(transparent)]
    Range(#[from] RangeViolation),

    #[error("{function}: non-positive pressure {value} Pa passed to saturation inverse")]
    NonPositivePressure { function: &'static str, value: f64 },

    #[error("property violation on stream {stream}: {source}")]
    Stream {
        stream: &'static str,
        source: RangeViolation,
    },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Jacobian is singular or too ill-conditioned (rcond estimate {rcond:.3e})")]
    SingularJacobian { rcond: f64 },

    #[error("algebraic Jacobian w.r.t. the algebraic unknowns is singular; system is not index-1 at this point")]
    NotIndexOne,

    #[error("converged solution leaves the operating envelope: {reason}")]
    OutOfEnvelope { reason: String },

    #[error("input validation failed: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got} for {what}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("schema error in {path}: {reason}")]
    Schema { path: String, reason: String },

    #[error("unit error: {0}")]
    Unit(String),

    #[error("homotopy failed at step {step}/{steps}: {source}")]
    Homotopy {
        step: usize,
        steps: usize,
        #[source]
        source: Box<AhpdError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AhpdError>;
