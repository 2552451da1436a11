//! Numerical engine for Taylor expansions of `H -> ||H||_p^p` on Hermitian
//! matrices: divided differences, simplex momenta, multiple operator integrals
//! and the polylinear forms built from them.

pub mod error;
pub mod frechet;
pub mod harness;
pub mod moi;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::function::{ScalarFn, ScalarFunctionModel};
pub use spectral::{CMatrix, HermitianMatrix, SchattenExponent, SpectralDecomposition, C64};
