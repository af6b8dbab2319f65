//! Exact and asymptotic norms of sign matrices, their Gram matrices, and
//! finite-horizon stability diagnostics for infinite kernel matrices.

pub mod error;
pub mod exact;
pub mod finite_norms;
pub mod gram;
pub mod kernels;
pub mod lambda_bounds;
pub mod sign_matrix;
pub mod stability;
pub mod verify;

pub use error::{Error, Result};
pub use finite_norms::{DenseMatrix, NormMethod, NormReport};
pub use gram::GramSpec;
pub use kernels::{FiniteSection, KernelHandle, PChoice};
pub use lambda_bounds::{Fig1Row, LambdaBoundRecord};
pub use sign_matrix::{SignMatrixSpec, SignVector};
pub use stability::{ProbePoint, StabilityReport, TestInput, Verdict};
pub use num_bigint::{BigInt, BigUint};
pub use num_rational::BigRational;
