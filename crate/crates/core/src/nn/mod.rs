//! Toy-scale trainable segmentation network: autodiff tape, U-Net, Adam with
//! cosine annealing, and the training loop.

mod checkpoint;
mod init;
mod optim;
mod tape;
mod tensor;
mod train;
mod unet;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use init::{kaiming_init, xavier_bound, xavier_init};
pub use optim::{cosine_lr, AdamState, CosineSchedule};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
pub use train::{
    calibration_stats, evaluate, train, train_with, warmup_factor, EpochRecord, Sample, TrainConfig, TrainOutcome, ValidationStats,
};
pub use unet::{backward, check_params, forward, init_params, predict, TinyUNetConfig};
