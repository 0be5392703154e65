//! Dense `f64` tensors, a reverse-mode gradient tape, AdaDelta, and
//! finite-difference gradient checking.

mod adadelta;
mod gradcheck;
pub mod io;
mod params;
mod tape;
mod tensor;

pub use adadelta::{update_slice as adadelta_update, AdaDelta, DEFAULT_EPS, DEFAULT_RHO};
pub use gradcheck::{compare_gradients, grad_check, grad_check_steps, relative_error, GradCheckReport, ParamCheck};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{masked_log_sum_exp, masked_softmax_into, NodeId, Tape};
pub use tensor::{identity_init, sigmoid, vec_mat, Tensor};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{0}: no inputs")]
    Empty(&'static str),
    #[error("softmax over an all-masked row")]
    AllMasked,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("truncated tensor data at byte {offset}")]
    Truncated { offset: usize },
    #[error("corrupt tensor data: {0}")]
    Corrupt(String),
}
