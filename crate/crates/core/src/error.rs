//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PricerError {
    /// A model or discretization parameter violates its documented range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An argument lies outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shape-function construction failed (singular or ill-conditioned local
    /// system, or not enough support nodes around an evaluation point).
    #[error("shape function assembly failed at ({x:.6}, {z:.6}): {reason}")]
    ShapeFunction { x: f64, z: f64, reason: String },

    /// Sub-domain layout cannot cover the computational domain.
    #[error("sub-domain coverage error: {0}")]
    Coverage(String),

    /// Weak-form assembly failed.
    #[error("assembly error: {0}")]
    Assembly(String),

    /// Banded LU factorization hit a numerically singular pivot.
    #[error("factorization failed: zero pivot at column {pivot}")]
    SingularFactor { pivot: usize },

    /// Time marching produced a non-finite value.
    #[error("non-finite value detected at time step {step}")]
    NonFinite { step: usize },

    /// An oracle computation did not converge to its tolerance.
    #[error("oracle error: {0}")]
    Oracle(String),

    /// Caller misuse: mismatched lengths, unknown ids, malformed configs.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PricerError>;
