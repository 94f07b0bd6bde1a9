//! Small dense linear algebra: spectral norms, condition numbers, angles
//! between vectors and subspaces, and oblique projections onto the columns
//! of a nonsingular matrix.
//!
//! All routines are pure functions over `nalgebra` dynamic matrices. The
//! matrices in this crate are tiny (`s` is the state dimension, usually 2
//! to 5), so nothing here tries to be clever about allocation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::tolerances::SINGULAR_RATIO;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is singular to tolerance (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    Singular { sigma_min: f64, sigma_max: f64 },
}

/// An angle in radians, always in `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Angle(f64);

impl Angle {
    pub fn radians(self) -> f64 {
        self.0
    }
}

fn check_finite_matrix(m: &Matrix) -> Result<(), LinalgError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::InvalidInput("matrix has non-finite entries".into()))
    }
}

fn check_finite_vector(v: &Vector, what: &str) -> Result<(), LinalgError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Singular values, largest first.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>, LinalgError> {
    check_finite_matrix(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(LinalgError::InvalidInput("empty matrix".into()));
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Operator norm induced by the Euclidean vector norms.
pub fn spectral_norm(m: &Matrix) -> Result<f64, LinalgError> {
    Ok(singular_values(m)?[0])
}

fn check_square(m: &Matrix) -> Result<(), LinalgError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(LinalgError::InvalidInput(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Fails with [`LinalgError::Singular`] when the smallest singular value is
/// at most `SINGULAR_RATIO` times the largest. Returns `(sigma_max, sigma_min)`.
pub fn check_nonsingular(m: &Matrix) -> Result<(f64, f64), LinalgError> {
    check_square(m)?;
    let sv = singular_values(m)?;
    let sigma_max = sv[0];
    let sigma_min = *sv.last().unwrap();
    if !(sigma_min > SINGULAR_RATIO * sigma_max) {
        return Err(LinalgError::Singular { sigma_min, sigma_max });
    }
    Ok((sigma_max, sigma_min))
}

/// `kappa(M) = ||M|| * ||M^-1||`.
pub fn condition_number(m: &Matrix) -> Result<f64, LinalgError> {
    let (sigma_max, sigma_min) = check_nonsingular(m)?;
    Ok(sigma_max / sigma_min)
}

/// Inverse of a nonsingular square matrix, via LU.
pub fn inverse(m: &Matrix) -> Result<Matrix, LinalgError> {
    let (sigma_max, sigma_min) = check_nonsingular(m)?;
    m.clone()
        .lu()
        .try_inverse()
        .ok_or(LinalgError::Singular { sigma_min, sigma_max })
}

/// Angle between two nonzero vectors, `arccos(<p,q> / (|p| |q|))`.
pub fn angle_between(p: &Vector, q: &Vector) -> Result<Angle, LinalgError> {
    check_finite_vector(p, "p")?;
    check_finite_vector(q, "q")?;
    if p.len() != q.len() {
        return Err(LinalgError::InvalidInput("vector length mismatch".into()));
    }
    let (np, nq) = (p.norm(), q.norm());
    if np == 0.0 || nq == 0.0 {
        return Err(LinalgError::InvalidInput("zero vector has no direction".into()));
    }
    let c = (p.dot(q) / (np * nq)).clamp(-1.0, 1.0);
    Ok(Angle(c.acos()))
}

/// Orthonormal basis of the span of `basis` (modified Gram-Schmidt with one
/// reorthogonalization pass). The caller guarantees independence.
pub(crate) fn orthonormal_columns(basis: &[Vector]) -> Vec<Vector> {
    let mut q: Vec<Vector> = Vec::with_capacity(basis.len());
    for v in basis {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &q {
                let c = u.dot(&w);
                w.axpy(-c, u, 1.0);
            }
        }
        let nw = w.norm();
        q.push(w / nw);
    }
    q
}

fn check_independent(basis: &[Vector]) -> Result<(), LinalgError> {
    let m = Matrix::from_columns(basis);
    let sv = singular_values(&m)?;
    let sigma_max = sv[0];
    let sigma_min = *sv.last().unwrap();
    if !(sigma_min > SINGULAR_RATIO * sigma_max) {
        return Err(LinalgError::InvalidInput(format!(
            "basis is rank-deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})"
        )));
    }
    Ok(())
}

/// Angle between a nonzero vector `p` and the span of `basis`:
/// the infimum of `angle_between(p, q)` over nonzero `q` in the span.
///
/// Computed from the residual of the orthogonal projection onto the span as
/// `atan2(|p - Pp|, |Pp|)`, which equals `arcsin(dist(p, V) / |p|)` and keeps
/// full accuracy near both `0` and `pi/2`.
pub fn angle_to_subspace(p: &Vector, basis: &[Vector]) -> Result<Angle, LinalgError> {
    check_finite_vector(p, "p")?;
    if basis.is_empty() {
        return Err(LinalgError::InvalidInput("subspace basis is empty".into()));
    }
    if basis.iter().any(|b| b.len() != p.len()) {
        return Err(LinalgError::InvalidInput("basis vector length mismatch".into()));
    }
    let np = p.norm();
    if np == 0.0 {
        return Err(LinalgError::InvalidInput("zero vector has no direction".into()));
    }
    check_independent(basis)?;
    let q = orthonormal_columns(basis);
    Ok(Angle(residual_angle(&(p / np), &q)))
}

/// Angle of a unit vector to the span of orthonormal `q`.
pub(crate) fn residual_angle(p: &Vector, q: &[Vector]) -> f64 {
    let mut resid = p.clone();
    let mut proj = vec![0.0; q.len()];
    for _ in 0..2 {
        for (c, u) in proj.iter_mut().zip(q) {
            let d = u.dot(&resid);
            *c += d;
            resid.axpy(-d, u, 1.0);
        }
    }
    let proj_norm = proj.iter().map(|c| c * c).sum::<f64>().sqrt();
    resid.norm().atan2(proj_norm)
}

/// Root projections of the simple-structure decomposition defined by the
/// columns `x_1, ..., x_s` of a nonsingular `X`: `P^i x_i = x_i` and
/// `P^i x_j = 0` for `j != i`, i.e. `P^i = X E_i X^-1`.
///
/// Each `P^i` is formed as `x_i w_i^T` where `X^T w_i = e_i`, so no explicit
/// inverse is built and positive rescaling of any column leaves every
/// projection unchanged.
pub fn oblique_projections(columns: &[Vector]) -> Result<Vec<Matrix>, LinalgError> {
    let s = columns.len();
    if s == 0 || columns.iter().any(|c| c.len() != s) {
        return Err(LinalgError::InvalidInput(
            "oblique projections need s columns of length s".into(),
        ));
    }
    let x = Matrix::from_columns(columns);
    let (sigma_max, sigma_min) = check_nonsingular(&x)?;
    let lu = x.transpose().lu();
    let mut out = Vec::with_capacity(s);
    for (i, xi) in columns.iter().enumerate() {
        let mut e = Vector::zeros(s);
        e[i] = 1.0;
        let w = lu
            .solve(&e)
            .ok_or(LinalgError::Singular { sigma_min, sigma_max })?;
        out.push(xi * w.transpose());
    }
    Ok(out)
}
