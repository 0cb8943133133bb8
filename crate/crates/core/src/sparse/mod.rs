//! Sparse symmetric/Hermitian direct solver.

pub mod lanczos;
pub mod ldl;
pub mod ordering;
pub mod scalar;

pub use ldl::{LdlError, LdlFactor, SymbolicLdl};
pub use scalar::{dotc, Complex64, Scalar};
