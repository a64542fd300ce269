//! Numerical substrate: tensors, seeded randomness, Cholesky, layer
//! primitives with analytic gradients, and Adam.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod linalg;
pub mod rng;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::grad_check;
pub use layers::{layer_forward_backward, LayerCache, LayerKind};
pub use linalg::cholesky_factor;
pub use rng::{gaussian_matrix, RngStream};
pub use tensor::Tensor;
