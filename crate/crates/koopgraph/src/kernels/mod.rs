//! Dense numerical primitives: matrix storage and products, SVD,
//! eigendecompositions, pseudo-inverse, least squares.
//!
//! All operations are pure functions of their inputs and safe to call
//! concurrently on distinct data.

mod decomp;
mod matrix;

pub use decomp::{
    eig_general, eig_residual, eig_symmetric, largest_principal_angle, lstsq, orthonormal_basis,
    pinv, svd, EigResult, SvdFactors, DEFAULT_RCOND,
};
pub use matrix::{dot, norm2, set_thread_cap, thread_cap, Matrix};
