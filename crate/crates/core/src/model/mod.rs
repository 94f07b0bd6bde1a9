//! The system `x(n+1) = A(n) x(n)`: coefficient sequences, log-scaled
//! solutions and transition matrices, and perturbations of `A`.

mod perturbation;
mod sequence;
mod trajectory;

use thiserror::Error;

use crate::expr::ExprError;
use crate::linalg::LinalgError;

pub use perturbation::{
    additive_to_multiplicative, multiplicative_to_additive, perturbed_sequence,
};
pub use sequence::{
    load_matrix_file, lyapunov_bound_estimate, parse_generator_spec, parse_matrix_file,
    parse_system_spec_in, write_matrix_file, CoefficientSequence, LyapunovBound, MatrixSequence,
    Source, SystemSpec,
};
pub use trajectory::{propagate, transition, ScaledMatrix, TrajectoryLog};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{line}:{column}: {message}")]
    Spec { line: usize, column: usize, message: String },
    #[error("expression error at {0}")]
    Expr(#[from] ExprError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("sequences are indexed from n = 1")]
    ZeroIndex,
    #[error("A({n}) requested but the sequence holds only {available} matrices")]
    OutOfRange { n: usize, available: usize },
    #[error("A({n}) has non-finite entries")]
    NonFinite { n: usize },
    #[error("not a Lyapunov sequence: A({n}) is singular")]
    NotLyapunov { n: usize },
    #[error("propagation produced a zero or non-finite vector at n = {n}")]
    Propagation { n: usize },
    #[error("inadmissible perturbation: A({n}) + Q({n}) is singular")]
    Inadmissible { n: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
