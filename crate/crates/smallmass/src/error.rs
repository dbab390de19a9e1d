//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by construction, validation, and numerical routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument failed a precondition check.
    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    /// A matrix expected to be symmetric was not, within tolerance.
    #[error("matrix not symmetric: max |a_ij - a_ji| = {found:e} exceeds {tol:e}")]
    NotSymmetric { found: f64, tol: f64 },

    /// A matrix expected to be symmetric positive definite had a
    /// non-positive eigenvalue.
    #[error("matrix not positive definite: smallest eigenvalue {eigenvalue:e}")]
    NotPositiveDefinite { eigenvalue: f64 },

    /// Dimensions of two inputs do not match.
    #[error("dimension mismatch for `{arg}`: got {got}, need {need}")]
    DimensionMismatch {
        arg: &'static str,
        got: usize,
        need: usize,
    },

    /// A requested moment does not converge for the given measure.
    #[error("moment of order {order} is not finite for this measure")]
    DivergentMoment { order: f64 },

    /// A rate fit was requested with too few usable ladder points.
    #[error("too few positive ladder points for a rate fit: have {have}, need {need}")]
    TooFewPoints { have: usize, need: usize },

    /// A quadrature routine failed to reach its tolerance.
    #[error("quadrature did not converge: estimated relative error {estimate:e} after {evals} evaluations")]
    QuadratureNoConvergence { estimate: f64, evals: usize },

    /// An exponent formula was evaluated outside its validity region.
    #[error("exponent formula undefined for theta = {theta}, eta = {eta}: {reason}")]
    ExponentOutOfRange {
        theta: f64,
        eta: f64,
        reason: &'static str,
    },
}

impl Error {
    /// Convenience constructor for [`Error::InvalidArgument`].
    pub fn invalid(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_error_messages_name_the_argument() {
        let e = Error::invalid("epsilon", "must be positive");
        assert_eq!(
            e.to_string(),
            "invalid argument `epsilon`: must be positive"
        );
    }

    #[test]
    fn test_dimension_mismatch_message() {
        let e = Error::DimensionMismatch {
            arg: "mark",
            got: 2,
            need: 1,
        };
        assert_eq!(e.to_string(), "dimension mismatch for `mark`: got 2, need 1");
    }
}
