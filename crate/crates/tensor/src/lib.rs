//! Minimal dense tensors with tape-based reverse-mode differentiation.
//!
//! Everything runs single-threaded and deterministically: the same inputs and
//! seeds give bit-identical values and gradients on a given build.

mod attention;
mod error;
pub mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod param;
mod tensor;

pub use attention::scaled_dot_attention;
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_sampled, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use optim::{sgd_step, Sgd};
pub use param::{fan_in_uniform, Bound, ParamStore, Parameter};
pub use tensor::{Scalar, Tensor};
