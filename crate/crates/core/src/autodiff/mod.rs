//! Reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! A [`Tape`] records one forward pass; parameters live in a [`ParamStore`]
//! and are bound to fresh leaf nodes on every pass.

mod params;
mod tape;
mod tensor;

pub use params::{Bindings, ParamBlock, ParamStore};
pub use tape::{logsumexp, AutodiffError, Gradients, NodeId, Op, Tape};
pub use tensor::Tensor;

pub(crate) use tape::{sigmoid, softplus};
