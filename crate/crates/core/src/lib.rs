//! Dictionary learning with unions of orthonormal bases.
//!
//! Each signal is coded by exactly one orthonormal block of the dictionary,
//! picked by the energy of its hard-thresholded coefficients; blocks are
//! refined by alternating thresholding with an SVD-based Procrustes update.
//! An OMP / approximate K-SVD baseline is included for comparison.

// `!(x > 0.0)` style checks are intentional: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baseline;
pub mod data;
pub mod error;
pub mod linalg;
pub mod onb;
pub mod persist;
pub mod report;
pub mod sbo;

pub use error::{Error, Result};
pub use linalg::{Matrix, SparseCodes};
