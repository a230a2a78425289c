//! Forward and backward kernels for every layer of the autoencoder.
//!
//! Kernels are pure: inputs are borrowed, outputs freshly allocated. Values
//! are stored as `f32` and every reduction accumulates in `f64` in a fixed
//! order, so results do not depend on the rayon thread count.

mod adam;
mod batchnorm;
mod conv;
mod layernorm;
mod loss;
mod prelu;
mod vector;

pub use adam::{adam_step, AdamConfig};
pub use batchnorm::{
    batchnorm_backward, batchnorm_eval, batchnorm_forward, BatchNormGrads, BatchNormState,
    BN_EPSILON, BN_MOMENTUM,
};
pub use conv::{
    conv2d_backward, conv2d_forward, conv_output_extent, deconv2d_backward, deconv2d_forward,
    deconv_output_extent, ConvGrads, Kernel, Stride,
};
pub use layernorm::{layernorm, layernorm_backward, LayerNormConfig, LayerNormMode, LN_EPSILON};
pub use loss::mse_loss;
pub use prelu::{prelu_backward, prelu_forward, PreluGrads};
pub use vector::{dot, l2_normalize};
