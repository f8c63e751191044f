//! Tape-based reverse-mode automatic differentiation over dense `f64`
//! tensors. Scoped to dense MLP workloads: matrix products, elementwise
//! maps, stable softmax/log-softmax, and full-sum reductions.
//!
//! A [`Tape`] records every primitive applied during a forward pass;
//! [`Tape::backward`] replays the records in reverse and accumulates
//! gradients for every `requires_grad` tensor reachable from a scalar loss.
//! Distinct tapes over shared immutable weight tensors may run concurrently;
//! one tape is single-threaded.

mod check;
pub(crate) mod kernels;
mod tape;
mod tensor;

#[cfg(test)]
mod tests;

pub use check::{gradient_check, CoordCheck, GradCheckConfig, GradCheckReport};
pub use tape::{BinaryOp, NodeId, Tape, UnaryOp};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised by tensor construction and tape operations.
#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("dimension mismatch in {op}: left shape {lhs:?}, right shape {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} implies {expected} elements but data has {actual}")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("numeric domain error in {op}: {detail}")]
    NumericDomain { op: &'static str, detail: String },
    #[error("non-finite values produced by {op}")]
    NonFinite { op: &'static str },
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
