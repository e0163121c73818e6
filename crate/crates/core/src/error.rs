use std::fmt;

use thiserror::Error;

/// A single violated model or option invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("{name} = {value} is out of range: {requirement}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("correlation matrix is not positive definite (determinant {determinant})")]
    NonPositiveDefinite { determinant: f64 },
    #[error("z0 = {z0} equals m_prime; the parabolic slow factor would be flat")]
    DegenerateSlowFactor { z0: f64 },
    #[error("a = {a} equals 2r; the modification factor degenerates")]
    ModificationDegenerate { a: f64 },
}

/// Violations collected by a validating constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamErrors(pub Vec<ParamError>);

impl fmt::Display for ParamErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParamErrors {}

impl ParamErrors {
    pub fn contains(&self, pred: impl Fn(&ParamError) -> bool) -> bool {
        self.0.iter().any(pred)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Invalid(#[from] ParamErrors),
    #[error("singular time: {quantity} = {value:e} is within {floor:e} of zero")]
    SingularTime {
        quantity: &'static str,
        value: f64,
        floor: f64,
    },
    #[error("logarithm domain: {quantity} = {value} must be positive")]
    LogDomain { quantity: &'static str, value: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),
    #[error("Poisson right-hand side is not centered: residual {residual:e}")]
    CenteringFailure { residual: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("option chain is empty")]
    EmptyChain,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no interior minimum: optimum pinned to bound {bound}")]
    NoInteriorMinimum { bound: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Absolute floor used by every time-singularity guard.
pub const SINGULARITY_FLOOR: f64 = 1e-12;

pub(crate) fn guard_nonzero(quantity: &'static str, value: f64) -> Result<()> {
    if value.abs() < SINGULARITY_FLOOR || !value.is_finite() {
        Err(Error::SingularTime {
            quantity,
            value,
            floor: SINGULARITY_FLOOR,
        })
    } else {
        Ok(())
    }
}
