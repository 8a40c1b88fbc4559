//! Dense matrices, explicit RNG state, initializers and PCA.

mod init;
mod matrix;
mod pca;
mod rng;

pub use init::{normal_init, orthogonal_init, uniform_init};
pub use matrix::{dot, sq_dist, Matrix};
pub use pca::{pca_2d, symmetric_eigen, Pca2d};
pub use rng::{DrawKind, RngState};
