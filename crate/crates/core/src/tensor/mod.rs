//! Dense matrices and reverse-mode differentiation.

mod matrix;
mod tape;

pub mod gradcheck;

pub use matrix::DenseMatrix;
pub use tape::{concat_rows, row_softmax, sigmoid, Gradients, Tape, Var, DEGENERATE_ROW_NORM};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {}x{} and {}x{}", lhs.0, lhs.1, rhs.0, rhs.1)]
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("matrix {rows}x{cols} needs {} values, got {len}", rows * cols)]
    Length { rows: usize, cols: usize, len: usize },
    #[error("matrix shape {rows}x{cols} is empty")]
    EmptyShape { rows: usize, cols: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("{op}: entry {index} = {value} is outside the domain")]
    Domain {
        op: &'static str,
        index: usize,
        value: f64,
    },
    #[error("row {row} is degenerate (norm {norm:e})")]
    DegenerateRow { row: usize, norm: f64 },
    #[error("backward needs a 1x1 output, got {rows}x{cols}")]
    NonScalarOutput { rows: usize, cols: usize },
}

impl TensorError {
    pub(crate) fn dimension(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        TensorError::Dimension { op, lhs, rhs }
    }
}
