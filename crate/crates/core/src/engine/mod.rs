//! Dense-tensor training engine for fully convolutional binary segmenters.
//!
//! Everything is generic over [`Real`], implemented for `f32` (the default
//! working precision) and `f64` (used for gradient checks and reproducible
//! runs).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use rustfft::FftNum;
use thiserror::Error;

mod batchnorm;
mod conv;
mod fft;
mod loss;
mod network;
mod optim;
mod pool;
mod tensor;
mod train;
mod weights;

pub use batchnorm::{BatchNorm, BatchNormCache};
pub use conv::{conv_backward, conv_forward, conv_forward_cached, ConvCache, ConvGrads, ConvLayer};
pub use loss::{bce_loss, binarize, BCE_EPSILON, DEFAULT_THRESHOLD};
pub use network::{build_network, Network, NetworkGrads, Tape};
pub use optim::{sgd_momentum_step, OptimizerState, DEFAULT_LEARNING_RATE, DEFAULT_MOMENTUM};
pub use pool::{maxpool2, unpool2, PoolIndices};
pub use tensor::{concat_channels, split_channels, Tensor};
pub use train::{
    image_tensor, mask_from_probabilities, predict, train, train_with_progress, EpochLog, Sample,
    TrainConfig,
};
pub use weights::{load_weights, read_weights, save_weights, write_weights};

use crate::network_spec::{Activation, SpecError};

/// Floating-point element type of the engine.
pub trait Real:
    FftNum + num_traits::Float + Default + Send + Sync + Debug + Display + Sum + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("pooling needs even spatial dimensions, got {height}x{width}")]
    OddSpatialDim { height: usize, width: usize },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("weights file: {0}")]
    WeightsFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite value produced in {0}")]
    NonFinite(String),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> EngineError {
    EngineError::ShapeMismatch(msg.into())
}

pub(crate) fn real<T: Real>(v: f64) -> T {
    T::from(v).expect("finite constant")
}

pub(crate) fn activate<T: Real>(act: Activation, v: T) -> T {
    match act {
        Activation::Relu => {
            if v > T::zero() {
                v
            } else {
                T::zero()
            }
        }
        Activation::Sigmoid => T::one() / (T::one() + (-v).exp()),
        Activation::None => v,
    }
}

/// Derivative of the activation expressed through its output `y`.
pub(crate) fn activation_grad<T: Real>(act: Activation, y: T) -> T {
    match act {
        Activation::Relu => {
            if y > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        Activation::Sigmoid => y * (T::one() - y),
        Activation::None => T::one(),
    }
}
