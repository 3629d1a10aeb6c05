//! Differentiable operations. Most are methods on [`Var`](crate::Var); the few n-ary
//! ones are free functions re-exported here.

pub mod conv;
pub mod elementwise;
pub mod linalg;
pub mod norm;
pub mod rnn;
pub mod shape;

pub use conv::{conv1d_out_len, Conv1dGeometry};
pub use elementwise::weighted_sum;
pub use linalg::gemm;
pub use shape::{concat, stack};
