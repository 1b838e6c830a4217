//! Dense column-major matrices, the thin SVD, and the Procrustes update.

pub mod kernel;
mod matrix;
mod sparse;
mod svd;

pub use matrix::{MatRef, Matrix};
pub use sparse::{
    frobenius_error, frobenius_error_dense, residual_into, rmse, Atoms, SparseCodes,
};
pub use svd::{procrustes_polar, thin_svd, SvdResult};
