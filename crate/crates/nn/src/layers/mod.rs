//! Layer implementations. Image layers use NCHW tensors; sequence layers use
//! `(time, channels)` row-major matrices.

mod activation;
mod attention;
mod conv1d;
mod conv2d;
mod conv_transpose;
mod group_norm;
mod layer_norm;
mod linear;
mod pool;

pub use activation::{relu, relu_backward, sigmoid, softplus, softplus_backward};
pub use attention::{MultiHeadAttention, MultiHeadAttentionCtx};
pub use conv1d::{Conv1d, Conv1dCtx};
pub use conv2d::{Conv2d, Conv2dCtx};
pub use conv_transpose::{ConvTranspose2x2, ConvTranspose2x2Ctx};
pub use group_norm::{GroupNorm, GroupNormCtx};
pub use layer_norm::{LayerNorm, LayerNormCtx};
pub use linear::{Linear, LinearCtx};
pub use pool::{max_pool2, max_pool2_backward, MaxPoolCtx};
