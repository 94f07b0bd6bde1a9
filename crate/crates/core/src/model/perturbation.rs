//! Additive perturbations `A + Q` and multiplicative ones `A R`, related by
//! `Q(n) = A(n) R(n) - A(n)`.

use std::sync::Arc;

use super::{CoefficientSequence, MatrixSequence, ModelError};
use crate::linalg::{self, LinalgError, Matrix};

/// `R(n) = I + A(n)^-1 Q(n)` for `n = 1..=horizon`, tabulated.
pub fn additive_to_multiplicative(
    seq: &dyn MatrixSequence,
    q: &dyn MatrixSequence,
    horizon: usize,
) -> Result<CoefficientSequence, ModelError> {
    check_dims(seq, q)?;
    let s = seq.dim();
    let mut out = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        let a = seq.at(n)?;
        let qn = q.at(n)?;
        linalg::check_nonsingular(&(&a + &qn)).map_err(|e| match e {
            LinalgError::Singular { .. } => ModelError::Inadmissible { n },
            other => other.into(),
        })?;
        let lu = a.clone().lu();
        let ainv_q = lu.solve(&qn).ok_or(ModelError::NotLyapunov { n })?;
        out.push(Matrix::identity(s, s) + ainv_q);
    }
    CoefficientSequence::tabulated(out)
}

/// `Q(n) = A(n) R(n) - A(n)` for `n = 1..=horizon`, tabulated.
pub fn multiplicative_to_additive(
    seq: &dyn MatrixSequence,
    r: &dyn MatrixSequence,
    horizon: usize,
) -> Result<CoefficientSequence, ModelError> {
    check_dims(seq, r)?;
    let mut out = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        let a = seq.at(n)?;
        out.push(&a * r.at(n)? - a);
    }
    CoefficientSequence::tabulated(out)
}

/// The system `x(n+1) = A(n) R(n) x(n)`.
pub fn perturbed_sequence(
    seq: Arc<dyn MatrixSequence>,
    r: Arc<dyn MatrixSequence>,
) -> Result<CoefficientSequence, ModelError> {
    CoefficientSequence::product(seq, r)
}

fn check_dims(a: &dyn MatrixSequence, b: &dyn MatrixSequence) -> Result<(), ModelError> {
    if a.dim() != b.dim() {
        return Err(ModelError::DimensionMismatch(format!(
            "system has dimension {}, perturbation has dimension {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}
