//! Compact, condition-invariant place descriptors.
//!
//! CNN feature maps are layer-normalized and compressed by a convolutional
//! autoencoder; the encoder alone produces L2-normalized global descriptors
//! which are matched by cosine similarity and scored with Recall@K,
//! precision/recall, average precision and L2-distance histograms.
//!
//! Module map:
//! - [`tensor`], [`param`], [`ops`], [`nn`]: CPU kernels with hand-written
//!   backward passes and the Adam optimizer.
//! - [`model`]: architecture description, the autoencoder, training and
//!   checkpoints.
//! - [`data`]: FMAP/DVEC containers, pose tables and ground truth.
//! - [`eval`]: exact top-K retrieval and the evaluation report.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod ops;
pub mod param;
pub mod tensor;

pub use error::{Error, Result};
pub use param::Param;
pub use tensor::{Dims4, MapDims, Tensor4};
