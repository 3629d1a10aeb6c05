//! A compact reverse-mode autodiff engine over dense `f64` tensors.
//!
//! Sequence-model kernels (LSTM, convolutions, normalizations) are fused ops with
//! hand-written backward passes; [`gradcheck`] compares all of them against central
//! finite differences.

pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use params::{ParamId, ParamStore, Session};
pub use tensor::Tensor;
