use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("coefficient evaluation returned a non-finite value at x = {at}")]
    NonFiniteCoefficient { at: f64 },

    #[error("time step failed at step {step} (t = {time:.6}): {reason}; try doubling m to {suggested_m}")]
    Stiffness {
        step: usize,
        time: f64,
        reason: String,
        suggested_m: usize,
    },

    #[error("diffusion coefficient degenerates on this path: |sigma| = {value:.3e} < floor {floor:.1e} at step {step}, node {node}")]
    Nondegeneracy {
        step: usize,
        node: usize,
        value: f64,
        floor: f64,
    },

    #[error("path is not in the admissible class: {0}")]
    NotAdmissible(String),

    #[error("quadrature produced a non-finite value: {0}")]
    Quadrature(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("no hits recorded for threshold {threshold}: underflow; use importance sampling")]
    Underflow { threshold: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
