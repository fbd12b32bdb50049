//! Event-guided restoration of quadtree-compressed video.
//!
//! The crate covers the whole pipeline: a budgeted quadtree codec that
//! produces blocky frames ([`qtcodec`]), an event camera simulator
//! ([`evsim`]), a small residual CNN with hand-written backpropagation
//! ([`nn`]), its event-weighted loss ([`loss`]), Adam ([`optim`]), quality
//! metrics ([`metrics`]) and the training / restoration driver
//! ([`pipeline`]).
//!
//! Network, loss and optimizer code is generic over [`Scalar`] (`f32` or
//! `f64`); the aliases below fix the 64-bit types used by the pipeline.

pub mod error;
pub mod evsim;
pub mod image;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod qtcodec;
pub mod scalar;

pub use error::{Error, Result};
pub use image::{Plane, Tensor3};
pub use scalar::Scalar;

/// Single-channel intensity image with values in `[0, 1]`.
pub type Frame = Plane<f64>;
/// 64-bit channel stack.
pub type Tensor = Tensor3<f64>;
/// 64-bit network parameters.
pub type Model = nn::ModelParams<f64>;
/// Single-precision network parameters.
pub type ModelF32 = nn::ModelParams<f32>;
/// 64-bit gradients.
pub type ModelGradients = nn::Gradients<f64>;
/// 64-bit Adam state.
pub type Optimizer = optim::Adam<f64>;
