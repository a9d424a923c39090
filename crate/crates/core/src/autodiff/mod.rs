//! Minimal reverse-mode automatic differentiation over the operators the
//! policy network needs. Convolutions and the LSTM are single fused tape
//! nodes with hand-written backward passes.

mod gradcheck;
mod graph;
mod kernels;
mod tensor;

pub use gradcheck::{check_gradients, relative_error, GradCheckReport, REL_FLOOR};
pub use graph::{Gradients, Graph, Var};
pub use tensor::Tensor;
