//! Minimal reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! [`Tensor`]: crate::tensor::Tensor

mod graph;
pub mod kernels;

pub use graph::{
    bernoulli_row_nll, heaviside, sigmoid, surrogate_grad, Activation, Elementwise, Graph, LossKind, Var, PROB_EPS,
};
pub use kernels::Padding;
