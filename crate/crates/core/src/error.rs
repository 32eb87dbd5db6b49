use alloc::vec::Vec;
use core::fmt;

/// Errors reported by the algebraic layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The Lie-algebra rank must be at least 2 (SU(3) and up).
    RankOutOfRange { n: usize },
    /// A coefficient that must be strictly positive (or finite) is not.
    InvalidCoefficient { what: &'static str, index: usize, value: f64 },
    /// Input slices disagree in length with the declared rank.
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    /// An exponent exceeded the overflow guard; the state left the range
    /// where the integral weights are trustworthy.
    StateOutOfRange { component: usize, max_exponent: f64 },
    /// A field that must have zero mean does not.
    MeanNotZero { component: usize, mean: f64 },
    /// The weights violate the admissibility inequality; the constants
    /// constraint has no nonnegative solution. One margin per component,
    /// negative entries mark the violations.
    NotAdmissible { margins: Vec<f64> },
    /// An internal identity of the constraint system failed beyond
    /// tolerance (for example a discriminant went negative).
    ConstraintViolation { level: usize, detail: &'static str, value: f64 },
    /// A root solve did not reach tolerance within the iteration budget.
    NonConvergence { level: usize, iterations: usize, best_residual: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::RankOutOfRange { n } => {
                write!(f, "rank must be >= 2, got {n}")
            }
            Error::InvalidCoefficient { what, index, value } => {
                write!(f, "invalid {what} at index {index}: {value}")
            }
            Error::DimensionMismatch { what, expected, got } => {
                write!(f, "{what}: expected length {expected}, got {got}")
            }
            Error::StateOutOfRange { component, max_exponent } => {
                write!(
                    f,
                    "exponent overflow in component {component}: max exponent {max_exponent} exceeds guard"
                )
            }
            Error::MeanNotZero { component, mean } => {
                write!(f, "component {component} must have zero mean, got {mean:e}")
            }
            Error::NotAdmissible { margins } => {
                write!(f, "weights not admissible; margins {margins:?}")
            }
            Error::ConstraintViolation { level, detail, value } => {
                write!(f, "constraint violation at level {level}: {detail} ({value:e})")
            }
            Error::NonConvergence { level, iterations, best_residual } => {
                write!(
                    f,
                    "level {level} root solve did not converge after {iterations} iterations; best residual {best_residual:e}"
                )
            }
        }
    }
}

impl core::error::Error for Error {}
