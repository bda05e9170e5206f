//! Dense linear algebra and the hand-differentiated layers of the projection
//! head. Training runs entirely in `f64`.

mod activation;
mod adam;
mod gradcheck;
mod layer_norm;
mod matrix;
mod softmax;

pub use activation::{log1p_relu, log1p_relu_backward, log1p_relu_scalar};
pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layer_norm::{layer_norm_backward, layer_norm_forward, LayerNormCache, LayerNormGrads};
pub use matrix::{dot, DenseMatrix};
pub use softmax::{log_softmax_in_place, stable_softmax};
