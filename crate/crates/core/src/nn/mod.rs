//! Convolutional restoration network with hand-written backpropagation.

pub mod activation;
pub mod batchnorm;
pub mod checkpoint;
pub mod conv;
pub mod model;

pub use activation::{leaky_relu, leaky_relu_backward, LEAKY_SLOPE};
pub use batchnorm::{BatchNorm, BatchStats, BnGrads, Mode};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use conv::{Conv2d, ConvGrads};
pub use model::{Architecture, BlockGrads, ForwardCache, Gradients, ModelParams, Network, ResidualBlock};
