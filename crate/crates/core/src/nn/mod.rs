//! Network layers with explicit forward and backward passes.
//!
//! Each forward function returns its output together with a cache holding the
//! intermediates its backward function consumes.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod loss;
pub mod pool;

pub use activation::{relu, relu_grad, ReluCache};
pub use conv::{conv2d, conv2d_grad, ConvCache, ConvGrads, ConvParams};
pub use dense::{dense_affine, dense_grad, DenseCache, DenseGrads, DenseParams};
pub use dropout::{dropout, dropout_grad, DropoutKey, Mode};
pub use loss::{softmax_cross_entropy, SoftmaxLoss};
pub use pool::{maxpool2d, maxpool2d_grad, PoolCache};
