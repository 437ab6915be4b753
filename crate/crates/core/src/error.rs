//! Error taxonomy shared by every module of the toolkit.

use thiserror::Error;

/// Errors produced by coefficient evaluation, transforms, the kernel
/// solver, and the simulation steppers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument left the domain it is defined on (r outside [0,1],
    /// t outside the horizon, r_bar outside the mapped interval, ...).
    #[error("domain violation: {0}")]
    Domain(String),

    /// A quadrature, root find, or linear solve failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Two objects that must share a grid or a time stamp do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A scenario or solver configuration is unusable as given.
    #[error("configuration error: {0}")]
    Config(String),

    /// The successive-approximation series did not reach the tolerance.
    #[error("kernel series did not converge after {iterations} iterates (tail norm {tail:.3e}, tolerance {tol:.3e})")]
    Convergence {
        iterations: usize,
        tail: f64,
        tol: f64,
    },

    /// A constructed object violates one of its documented invariants.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// The requested operation does not support this coefficient set.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A grid is too coarse for the requested stencil.
    #[error("resolution error: {0}")]
    Resolution(String),
}

impl Error {
    /// Prefixes message-carrying variants with the pipeline stage that
    /// raised them; structured variants already identify themselves.
    pub fn with_stage(self, stage: &str) -> Error {
        match self {
            Error::Domain(m) => Error::Domain(format!("[{stage}] {m}")),
            Error::Numerical(m) => Error::Numerical(format!("[{stage}] {m}")),
            Error::Shape(m) => Error::Shape(format!("[{stage}] {m}")),
            Error::Config(m) => Error::Config(format!("[{stage}] {m}")),
            Error::Invariant(m) => Error::Invariant(format!("[{stage}] {m}")),
            Error::Unsupported(m) => Error::Unsupported(format!("[{stage}] {m}")),
            Error::Resolution(m) => Error::Resolution(format!("[{stage}] {m}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
