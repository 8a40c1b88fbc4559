//! Activation-free neural networks built on the yat product
//! `E(w, x) = (w·x)² / (ε + ‖x − w‖²)`.
//!
//! Modules, bottom-up:
//!
//! - [`linalg`]: dense `f64` matrices, explicit RNG state, initializers, PCA.
//! - [`yat`]: the E/Ē products, layer scale, softermax, axiom checker, FLOP model.
//! - [`layers`]: yat and affine layers, dropout, patches, pooling, attention, masking.
//! - [`data`]: XOR, Gaussian blobs, IDX files.
//! - [`train`]: losses, regularizer, optimizers, models, training, gradient checks.
//! - [`nms`]: neuron projection, density, similarity and collapse reports.
//! - [`bench`]: instrumented FLOP counts, kernel throughput, ranking table.

pub mod bench;
pub mod data;
pub mod error;
pub mod layers;
pub mod linalg;
pub mod nms;
pub mod train;
pub mod yat;

pub use error::{Error, Result};
pub use linalg::{Matrix, RngState};
