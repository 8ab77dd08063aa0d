//! A small dense-tensor neural-network substrate: strided GEMM, layers with
//! explicit backward passes, losses, optimizers, gradient checks and
//! checkpoints.

mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod network;
mod optim;
mod scalar;
mod tensor;

pub use checkpoint::{Checkpoint, ParamBlock, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, weighted_square_loss, BlockError, GradCheckOptions, GradCheckReport, LossFn};
pub use layers::{Conv2d, Dense, Dropout, Flatten, Layer, MaxPool2d, Pass, Relu};
pub use loss::{check_labels, cross_entropy, softmax, softmax_in_place};
pub use network::{argmax, Network};
pub use optim::{Optimizer, OptimizerConfig};
pub use scalar::{gemm_rows, Mat, MatMut, Scalar};
pub use tensor::{he_values, Param, Tensor};
