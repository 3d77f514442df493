//! Minimal reverse-mode automatic differentiation over dense float32 tensors.

pub mod conv;
mod graph;
mod tensor;

pub use conv::{parallel_enabled, set_parallel};
pub use graph::{sigmoid, softplus, Gradients, Graph, NodeId};
pub use tensor::Tensor;

#[cfg(test)]
mod gradcheck;
