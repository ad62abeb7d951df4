//! Residual convolutional network for CSI super-resolution.

mod activation;
pub mod checkpoint;
mod conv;
pub(crate) mod gemm;
mod loss;
mod network;
pub mod train;

pub use activation::{lrelu, lrelu_grad};
pub use checkpoint::Checkpoint;
pub use conv::{conv2d_forward, ConvLayer, FeatureMap, KERNEL};
pub use loss::{mse_grad, mse_loss};
pub use network::{ConvNetwork, LayerGradient, NetworkShape};
pub use train::{
    drive_epochs, fit, mean_loss, transfer_train, EarlyStopping, LossReport, LossWeighting, Optimizer, StopReason,
    Trainable,
    TrainingConfig, TrainingPair,
};
