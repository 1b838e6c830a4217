//! Signal ingestion: netpbm images, patch sampling and the `ODM1` matrix
//! container.

mod netpbm;
pub mod odm;
mod patches;

pub use netpbm::{encode_pgm, load_image, luma, parse_netpbm, save_pgm, GrayImage};
pub use odm::{load_matrices, load_matrix, save_matrices, save_matrix};
pub use patches::{extract_patches, extract_patches_from_images, Normalization, PatchConfig};
