//! The convolutional autoencoder: architecture, training and checkpoints.

mod arch;
mod cae;
mod checkpoint;
mod encode;
mod train;

pub use arch::{ArchSpec, Backbone, BlockGeometry, CANONICAL_D3, DEFAULT_D1, DEFAULT_D2};
pub use cae::{build_model, CaeModel, DecoderBlock, EncoderBlock};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use encode::encode_set;
pub use train::{train, train_with_hook, EpochRecord, TrainConfig, TrainingLog};
