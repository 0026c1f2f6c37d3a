//! Minimal tensor layers with hand-written reverse-mode gradients, and the
//! DualTCN and TCN-only regressors built from them.

mod layers;
mod network;

pub use layers::{
    dropout_mask, gelu, gelu_grad, BatchNorm, Conv1d, Linear, Mode, Param, Tensor3, BN_EPS, BN_MOMENTUM,
};
pub use network::{
    batch_tensor, param_count, random_input, Architecture, Network, NetworkConfig, Prediction, PredictionGrad,
};
