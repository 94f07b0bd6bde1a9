//! Solutions and transition matrices kept as `exp(log_scale) * unit`.

use super::{MatrixSequence, ModelError};
use crate::linalg::{self, LinalgError, Matrix, Vector};

/// A solution `x(n)`, `n = 1..=horizon`, stored as unit directions and
/// accumulated log-norms: `x(n) = exp(log_norm(n)) * direction(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    dim: usize,
    directions: Vec<f64>,
    log_norms: Vec<f64>,
}

impl TrajectoryLog {
    /// Builds a log from raw parts; directions are row-per-step, flattened.
    pub fn from_parts(dim: usize, directions: Vec<f64>, log_norms: Vec<f64>) -> Self {
        assert_eq!(directions.len(), dim * log_norms.len(), "direction storage does not match step count");
        Self { dim, directions, log_norms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Last logged index.
    pub fn horizon(&self) -> usize {
        self.log_norms.len()
    }

    pub fn direction(&self, n: usize) -> &[f64] {
        let k = n - 1;
        &self.directions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn direction_vector(&self, n: usize) -> Vector {
        Vector::from_column_slice(self.direction(n))
    }

    pub fn log_norm(&self, n: usize) -> f64 {
        self.log_norms[n - 1]
    }

    pub fn log_norms(&self) -> &[f64] {
        &self.log_norms
    }

    /// `x(n)` itself; overflows for large log-norms.
    pub fn value(&self, n: usize) -> Vector {
        self.direction_vector(n) * self.log_norm(n).exp()
    }

    /// The trajectory of `c * x` for `c > 0`.
    pub fn rescaled(&self, c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite(), "rescaling factor must be positive");
        let shift = c.ln();
        Self {
            dim: self.dim,
            directions: self.directions.clone(),
            log_norms: self.log_norms.iter().map(|l| l + shift).collect(),
        }
    }
}

/// Propagates `x(1) = x0` through `x(n+1) = A(n) x(n)` up to `n = horizon`,
/// renormalizing every step.
pub fn propagate(seq: &dyn MatrixSequence, x0: &Vector, horizon: usize) -> Result<TrajectoryLog, ModelError> {
    let s = seq.dim();
    if x0.len() != s {
        return Err(ModelError::DimensionMismatch(format!(
            "initial vector has length {}, system dimension is {s}",
            x0.len()
        )));
    }
    if horizon == 0 {
        return Err(ModelError::DimensionMismatch("horizon must be at least 1".into()));
    }
    let norm0 = x0.norm();
    if norm0 == 0.0 || !norm0.is_finite() {
        return Err(ModelError::Linalg(LinalgError::InvalidInput(
            "initial vector must be nonzero and finite".into(),
        )));
    }
    let mut directions = Vec::with_capacity(s * horizon);
    let mut log_norms = Vec::with_capacity(horizon);
    let mut d = x0 / norm0;
    let mut l = norm0.ln();
    directions.extend_from_slice(d.as_slice());
    log_norms.push(l);
    for n in 1..horizon {
        let y = seq.at(n)? * &d;
        let ny = y.norm();
        if ny == 0.0 || !ny.is_finite() {
            return Err(ModelError::Propagation { n: n + 1 });
        }
        d = y / ny;
        l += ny.ln();
        directions.extend_from_slice(d.as_slice());
        log_norms.push(l);
    }
    Ok(TrajectoryLog { dim: s, directions, log_norms })
}

/// `exp(log_scale) * unit` with `|unit| = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMatrix {
    pub unit: Matrix,
    pub log_scale: f64,
}

impl ScaledMatrix {
    pub fn identity(dim: usize) -> Self {
        Self { unit: Matrix::identity(dim, dim), log_scale: 0.0 }
    }

    pub fn from_matrix(m: Matrix) -> Result<Self, LinalgError> {
        let norm = linalg::spectral_norm(&m)?;
        if norm == 0.0 {
            return Err(LinalgError::InvalidInput("cannot log-scale the zero matrix".into()));
        }
        Ok(Self { unit: m / norm, log_scale: norm.ln() })
    }

    /// `self * rhs`, renormalized.
    pub fn mul(&self, rhs: &ScaledMatrix) -> Result<Self, LinalgError> {
        let mut p = Self::from_matrix(&self.unit * &rhs.unit)?;
        p.log_scale += self.log_scale + rhs.log_scale;
        Ok(p)
    }

    pub fn log_norm(&self) -> f64 {
        self.log_scale
    }

    /// The represented matrix; overflows for large scales.
    pub fn to_matrix(&self) -> Matrix {
        &self.unit * self.log_scale.exp()
    }

    pub fn apply(&self, x: &Vector) -> (Vector, f64) {
        let y = &self.unit * x;
        let ny = y.norm();
        (y / ny, ny.ln() + self.log_scale)
    }
}

/// `X(n, m)`: `A(n-1) ... A(m)` for `n > m`, `I` for `n = m`, and
/// `X(m, n)^-1` for `n < m`.
pub fn transition(seq: &dyn MatrixSequence, n: usize, m: usize) -> Result<ScaledMatrix, ModelError> {
    if n == 0 || m == 0 {
        return Err(ModelError::ZeroIndex);
    }
    let s = seq.dim();
    let mut acc = ScaledMatrix::identity(s);
    if n >= m {
        for k in m..n {
            let a = ScaledMatrix::from_matrix(seq.at(k)?)?;
            acc = a.mul(&acc)?;
        }
    } else {
        // X(n, m) = A(n)^-1 ... A(m-1)^-1
        for k in n..m {
            let inv = linalg::inverse(&seq.at(k)?).map_err(|e| match e {
                LinalgError::Singular { .. } => ModelError::NotLyapunov { n: k },
                other => other.into(),
            })?;
            let a = ScaledMatrix::from_matrix(inv)?;
            acc = acc.mul(&a)?;
        }
    }
    Ok(acc)
}
