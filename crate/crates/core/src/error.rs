use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// One of the kernel denominators `D`, `D̃`, `κ`, `d`, `d̃` fell below the guard.
    #[error("degenerate denominator {which} at index {index}: |value| = {modulus:e}")]
    DegenerateDenominator {
        which: &'static str,
        index: usize,
        modulus: f64,
    },

    #[error("no convergence after {iterations} iterations (residual {residual:e}, Im z = {im_z})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        im_z: f64,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<S: Into<String>>(msg: S) -> Error {
    Error::InvalidInput(msg.into())
}
