//! The steering network: five unpadded convolutions and four dense layers,
//! batch normalization before every LeakyReLU except on the last two dense
//! layers, and a single linear output in steering-wheel degrees.
//!
//! Convolution kernels are clamped per axis to the extent of their input map.
//! With the default 66×258 input this only affects the fifth convolution,
//! which sees a 1×13 map and therefore runs as 1×3.

mod config;
mod gradcheck;
mod layers;
mod network;
mod params;

pub use config::{ConvGeometry, ConvSpec, NetworkConfig};
pub use gradcheck::{gradient_check, gradient_check_seeded, GradCheck};
pub use network::{backward, forward_train, predict, ForwardCache, Gradients, Mode, Network};
pub use params::{BatchNorm, ConvLayer, DenseLayer, ModelParams};

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    Config(&'static str),
    #[error("input dims {actual:?} do not match expected {expected:?}")]
    Shape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("convolution {layer} does not fit its {height}×{width} input")]
    Geometry {
        layer: usize,
        height: usize,
        width: usize,
    },
    #[error("backward called without a cached train-mode forward pass")]
    NoCache,
}
