//! Minimal reverse-mode differentiation engine with exactly the layer set
//! the three networks need, plus losses, optimizers and checkpointing.

pub mod checkpoint;
mod graph;
pub mod gradcheck;
mod layer;
mod loss;
mod optim;
mod tensor;

pub use graph::Graph;
pub use layer::{receptive_field, Layer, LayerSpec, Padding};
pub use loss::{cross_entropy, l2_loss, softmax};
pub use optim::{OptimKind, Optimizer};
pub use tensor::{Param, Tensor};
