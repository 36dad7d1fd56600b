//! Differentiable building blocks: convolution, batch normalization,
//! pooling/unpooling, and activations. Every forward has a matching
//! backward that consumes only what the forward cached.

pub mod activation;
pub mod conv;
pub mod norm;
pub mod pool;

pub use activation::{relu_backward, relu_forward, softmax_backward, softmax_channel};
pub use conv::{conv_backward, conv_forward, ConvGrads, ConvParams};
pub use norm::{
    batchnorm_backward, batchnorm_infer_forward, batchnorm_train_forward, BatchNormCache,
    BatchNormParams, BN_EPS, BN_MOMENTUM,
};
pub use pool::{maxpool_backward, maxpool_forward, unpool_backward, unpool_forward, PoolSwitches};
