//! Dense arrays and a small reverse-mode differentiation tape.

mod array;
mod graph;
pub mod kernels;

pub use array::{log_add, log_softmax_rows, logsumexp, Array};
pub use graph::{Graph, NodeId};
pub use kernels::ConvGeometry;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this graph; reset gradients first")]
    BackwardTwice,
}
