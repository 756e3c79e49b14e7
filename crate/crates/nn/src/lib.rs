//! Minimal CPU tensor layers with explicit forward/backward passes.
//!
//! Every layer follows the same contract: `forward_train` returns the output
//! plus a context value holding whatever the backward pass needs, and
//! `backward` consumes that context, accumulates parameter gradients into the
//! layer's [`Param`]s and returns the gradient with respect to the input.
//! `forward` is the read-only inference path, so a loaded model can be shared
//! across threads.

pub mod checkpoint;
mod gemm;
pub mod layers;
pub mod optim;
mod param;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use gemm::gemm;
pub use param::{Module, Param};
pub use tensor::Tensor;
