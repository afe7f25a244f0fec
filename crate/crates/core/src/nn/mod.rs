//! Small convolutional grader with hand-written backpropagation.
//!
//! Each backbone is a stack of `[conv3x3, relu, maxpool2x2]` blocks followed
//! by global average pooling. The single-branch model sees the five-channel
//! `rgb_ls_ts` stack; the dual-branch model runs two backbones on `rgb_ls`
//! and `rgb_ts` and concatenates `[f_LS, f_TS]` before a softmax head.

mod checkpoint;
mod gradcam;
pub mod layers;
mod model;
mod tensor;
mod train;

pub use checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, ModelCheckpoint};
pub use gradcam::grad_cam;
pub use layers::{cross_entropy, head_forward, softmax, HeadParams, NUM_CLASSES};
pub use model::{
    argmax_label, forward_dual, forward_single, init_params, predict, Architecture, BackboneParams, ConvBlock,
    Gradients, Model, ModelConfig,
};
pub use tensor::Tensor4;
pub use train::{accuracy, train, EpochRecord, TrainConfig, TrainOutcome, TrainSample};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("max pooling needs even dims, got {0}x{1}")]
    OddDimension(usize, usize),
    #[error("non-finite tensor value")]
    NonFinite,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss diverged in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
