//! Differentiable building blocks: tensors, a tape-based reverse-mode graph,
//! Adam and spectral normalization.

mod adam;
mod graph;
pub mod init;
pub mod kernels;
mod params;
mod spectral;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{gaussian_nll_value, Gradients, Graph, NodeId, LOG_SCALE_MAX, LOG_SCALE_MIN};
pub use params::{ParamId, ParamStore, Parameter};
pub use spectral::{matrix_dims, spectral_normalize, PowerIterState, SpectralNorm};
pub use tensor::Tensor;

/// Negative-side slope of every leaky ReLU in the networks.
pub const LEAKY_SLOPE: f64 = 0.01;
