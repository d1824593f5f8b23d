//! Dense float64 tensors with a reverse-mode differentiation tape.
//!
//! Values are recorded on a [`Tape`] as they are computed; [`Tape::backward`]
//! then sweeps the tape in reverse and accumulates gradients additively when
//! a value feeds several consumers. Broadcasting is limited to a one-element
//! right operand, plus the explicit row/column forms [`Tape::add_row`] and
//! [`Tape::mul_col`].

mod params;
mod tape;
mod tensor;

pub use params::{ParamId, ParamStore};
pub use tape::{swish, swish_grad, BinaryOp, Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
use tape::segment_sum_values;
