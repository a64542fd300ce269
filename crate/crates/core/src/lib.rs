//! Contrastive and triplet metric learning from first principles: tensors,
//! layers and Adam written by hand, synthetic and MNIST data, variance and
//! greediness diagnostics, kNN and retrieval evaluation, and a reproducible
//! experiment driver.

pub mod analysis;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod trainer;

pub use error::{Error, Result};
