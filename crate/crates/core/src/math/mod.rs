//! Dense linear algebra, the two simplex row normalizers, taped reverse-mode
//! differentiation and a finite-difference oracle.

mod finite_diff;
mod graph;
pub mod simplex;
mod tensor;

pub use finite_diff::{finite_diff, finite_diff_jacobian, relative_error};
pub use graph::{Graph, NodeId};
pub use simplex::{softmax_row, sparsemax_backward, sparsemax_row};
pub use tensor::{matvec, Tensor};

pub(crate) use tensor::dot;
