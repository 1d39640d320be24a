//! Query-encoder training against frozen gallery embeddings.

mod adam;
mod checkpoint;
mod encoder;
mod schedule;
mod train;

pub use adam::AdamState;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader};
pub use encoder::{Activation, ForwardPass, QueryEncoder};
pub use schedule::linear_lr;
pub use train::{sample_loss_and_param_grad, train_query_model, LossKind, SampleTarget, TrainConfig, TrainReport};
