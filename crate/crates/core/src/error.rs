use alloc::string::String;

use crate::sparse::LdlError;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mesh generation failed: {0}")]
    Mesh(String),

    /// det F ≤ 0 (or non-finite) at a quadrature point or element centre.
    #[error("non-physical deformation in element {element} (det F = {det:.3e})")]
    NonPhysical { element: usize, det: f64 },

    #[error("Newton iteration did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Linear(#[from] LdlError),

    #[error("load path aborted at lambda2 = {lambda2}: {reason}")]
    LoadPath { lambda2: f64, reason: String },

    #[error("disconnected or degenerate topology: {0}")]
    Topology(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),
}

impl Error {
    /// Failures that a smaller load increment (or a larger c) may cure.
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            Error::NonPhysical { .. } | Error::NotConverged(_) | Error::Linear(_)
        )
    }
}
