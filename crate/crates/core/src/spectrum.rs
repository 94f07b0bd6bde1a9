//! Finite-horizon Lyapunov exponents: growth profiles, tail-max estimates,
//! spectra by the discrete QR method, and the incompressibility test for a
//! fundamental solution system.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Matrix, Vector};
use crate::model::{propagate, MatrixSequence, ModelError, TrajectoryLog};
use crate::splitness::FssRecord;
use crate::tolerances::{
    DENSE_CHECKPOINT_LIMIT, GROUP_TOL, LARGE_HORIZON_STRIDE, REALIZE_TOL, TAIL_FRACTION,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("tail window is empty (profile length {len}, tail fraction {tail_fraction})")]
    EmptyWindow { len: usize, tail_fraction: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("basis collapsed at n = {n} during QR propagation")]
    Collapse { n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How a limit superior is replaced by a finite maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRule {
    /// The maximum is taken over the last `tail_fraction` of the profile.
    pub tail_fraction: f64,
    /// Indices within this distance of the maximum count as realizing.
    pub realize_tol: f64,
}

impl Default for TailRule {
    fn default() -> Self {
        Self { tail_fraction: TAIL_FRACTION, realize_tol: REALIZE_TOL }
    }
}

impl TailRule {
    pub fn with_tail(tail_fraction: f64) -> Self {
        Self { tail_fraction, ..Self::default() }
    }

    /// First `k` of the tail window for a profile of length `len`.
    pub fn window_start(&self, len: usize) -> Result<usize, SpectrumError> {
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(SpectrumError::InvalidInput(format!(
                "tail fraction must lie in (0, 1], got {}",
                self.tail_fraction
            )));
        }
        let width = ((self.tail_fraction * len as f64).ceil() as usize).min(len);
        if width == 0 {
            return Err(SpectrumError::EmptyWindow { len, tail_fraction: self.tail_fraction });
        }
        Ok(len - width + 1)
    }
}

/// `f(k; sigma) = ln|x(k sigma)| / (k sigma)` for `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentProfile {
    pub sigma: usize,
    /// `values[k - 1] = f(k; sigma)`.
    pub values: Vec<f64>,
}

impl ExponentProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, k: usize) -> f64 {
        self.values[k - 1]
    }
}

pub fn exponent_profile(traj: &TrajectoryLog, sigma: usize) -> Result<ExponentProfile, SpectrumError> {
    if sigma == 0 {
        return Err(SpectrumError::InvalidInput("sigma must be at least 1".into()));
    }
    let kmax = traj.horizon() / sigma;
    if kmax == 0 {
        return Err(SpectrumError::InvalidInput(format!(
            "trajectory of length {} does not reach n = sigma = {sigma}",
            traj.horizon()
        )));
    }
    let values = (1..=kmax)
        .map(|k| {
            let n = k * sigma;
            traj.log_norm(n) / n as f64
        })
        .collect();
    Ok(ExponentProfile { sigma, values })
}

/// Indices `k` (strictly increasing) along which the tail maximum is attained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizingSequence {
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimsupEstimate {
    pub value: f64,
    pub realizing: RealizingSequence,
    /// The `k` attaining the maximum (the largest one on ties).
    pub principal: usize,
    pub window_start: usize,
}

fn tail_max(values: &[f64], rule: &TailRule) -> Result<LimsupEstimate, SpectrumError> {
    let start = rule.window_start(values.len())?;
    let mut principal = start;
    let mut best = f64::NEG_INFINITY;
    for k in start..=values.len() {
        let v = values[k - 1];
        if v >= best {
            best = v;
            principal = k;
        }
    }
    let indices = (start..=values.len())
        .filter(|&k| values[k - 1] >= best - rule.realize_tol)
        .collect();
    Ok(LimsupEstimate { value: best, realizing: RealizingSequence { indices }, principal, window_start: start })
}

pub fn limsup_estimate(profile: &ExponentProfile, rule: &TailRule) -> Result<LimsupEstimate, SpectrumError> {
    tail_max(&profile.values, rule)
}

/// Exponents that agree to within `tol` of their neighbour share a group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentGroup {
    pub value: f64,
    pub multiplicity: usize,
}

pub fn group_exponents(sorted: &[f64], tol: f64) -> Vec<ExponentGroup> {
    let mut groups: Vec<(f64, usize)> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for &v in sorted {
        match groups.last_mut() {
            Some((sum, m)) if v - last < tol => {
                *sum += v;
                *m += 1;
            }
            _ => groups.push((v, 1)),
        }
        last = v;
    }
    groups
        .into_iter()
        .map(|(sum, m)| ExponentGroup { value: sum / m as f64, multiplicity: m })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub n: usize,
    /// Column profile values `f_j(n)` in propagation order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEstimate {
    /// Sorted ascending.
    pub exponents: Vec<f64>,
    pub groups: Vec<ExponentGroup>,
    /// Realizing indices `n` for each entry of `exponents`.
    pub realizing: Vec<Vec<usize>>,
    pub horizon: usize,
    pub rule: TailRule,
    pub checkpoint_stride: usize,
    pub trace: Vec<Checkpoint>,
}

impl SpectrumEstimate {
    fn from_columns(
        per_column: Vec<LimsupEstimate>,
        horizon: usize,
        rule: TailRule,
        checkpoint_stride: usize,
        trace: Vec<Checkpoint>,
    ) -> Self {
        let mut cols: Vec<LimsupEstimate> = per_column;
        cols.sort_by(|a, b| a.value.total_cmp(&b.value));
        let exponents: Vec<f64> = cols.iter().map(|c| c.value).collect();
        Self {
            groups: group_exponents(&exponents, GROUP_TOL),
            realizing: cols.into_iter().map(|c| c.realizing.indices).collect(),
            exponents,
            horizon,
            rule,
            checkpoint_stride,
            trace,
        }
    }
}

/// Checkpoint stride used for the recorded trace at a given horizon.
pub fn checkpoint_stride(horizon: usize) -> usize {
    if horizon <= DENSE_CHECKPOINT_LIMIT {
        1
    } else {
        LARGE_HORIZON_STRIDE
    }
}

/// Spectrum by the discrete QR method started from the identity basis.
///
/// Column `j` carries the accumulated `ln |R_jj|`; each column's profile is
/// reduced with the tail rule and the column maxima are sorted. Every step
/// enters the maxima; only the stored trace is strided.
pub fn spectrum_estimate(
    seq: &dyn MatrixSequence,
    horizon: usize,
    rule: &TailRule,
) -> Result<SpectrumEstimate, SpectrumError> {
    if horizon == 0 {
        return Err(SpectrumError::InvalidInput("horizon must be at least 1".into()));
    }
    let s = seq.dim();
    let start = rule.window_start(horizon)?;
    let stride = checkpoint_stride(horizon);
    let mut q = Matrix::identity(s, s);
    let mut logs = vec![0.0; s];
    let mut window: Vec<Vec<f64>> = vec![Vec::with_capacity(horizon - start + 1); s];
    let mut trace = Vec::new();
    let record = |n: usize, logs: &[f64], window: &mut Vec<Vec<f64>>, trace: &mut Vec<Checkpoint>| {
        let f: Vec<f64> = logs.iter().map(|l| l / n as f64).collect();
        if n >= start {
            for (w, v) in window.iter_mut().zip(&f) {
                w.push(*v);
            }
        }
        if n.is_multiple_of(stride) || n == 1 || n == horizon {
            trace.push(Checkpoint { n, values: f });
        }
    };
    record(1, &logs, &mut window, &mut trace);
    let mut cols: Vec<Vector> = Vec::with_capacity(s);
    for n in 1..horizon {
        let z = seq.at(n)? * &q;
        cols.clear();
        for j in 0..s {
            let mut w = z.column(j).into_owned();
            for _ in 0..2 {
                for u in &cols {
                    let c = u.dot(&w);
                    w.axpy(-c, u, 1.0);
                }
            }
            let r = w.norm();
            if r == 0.0 || !r.is_finite() {
                return Err(SpectrumError::Collapse { n: n + 1 });
            }
            logs[j] += r.ln();
            cols.push(w / r);
        }
        q = Matrix::from_columns(&cols);
        record(n + 1, &logs, &mut window, &mut trace);
    }
    let per_column = window
        .iter()
        .map(|w| {
            // window holds k = start..=horizon
            let mut padded = vec![f64::NEG_INFINITY; start - 1];
            padded.extend_from_slice(w);
            tail_max(&padded, rule)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SpectrumEstimate::from_columns(per_column, horizon, *rule, stride, trace))
}

/// Per-solution tail-max exponents of an FSS, sorted.
pub fn fss_spectrum(fss: &FssRecord, rule: &TailRule) -> Result<SpectrumEstimate, SpectrumError> {
    let per = fss
        .trajectories()
        .iter()
        .map(|t| limsup_estimate(&exponent_profile(t, 1)?, rule))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SpectrumEstimate::from_columns(per, fss.horizon(), *rule, 1, Vec::new()))
}

/// Tail-max exponent of each FSS member at `sigma = 1`, in FSS order.
pub fn member_exponents(fss: &FssRecord, rule: &TailRule) -> Result<Vec<LimsupEstimate>, SpectrumError> {
    fss.trajectories()
        .iter()
        .map(|t| limsup_estimate(&exponent_profile(t, 1)?, rule))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalityVerdict {
    NormalUpToHorizon,
    NotNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub coefficients: Vec<f64>,
    pub combined_exponent: f64,
    pub supported_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncompressibilityReport {
    pub verdict: NormalityVerdict,
    pub horizon: usize,
    pub member_exponents: Vec<f64>,
    pub witness: Option<Witness>,
    pub combinations_tested: usize,
    pub degenerate_skipped: usize,
    pub seed: u64,
}

/// All vectors over `{-1, 0, 1}` whose first nonzero entry is `+1`, in
/// lexicographic order.
fn sign_patterns(s: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let total = 3usize.pow(s as u32);
    for code in 0..total {
        let mut c = vec![0.0; s];
        let mut rest = code;
        for j in (0..s).rev() {
            c[j] = (rest % 3) as f64 - 1.0;
            rest /= 3;
        }
        if c.iter().find(|v| **v != 0.0) == Some(&1.0) {
            out.push(c);
        }
    }
    out
}

/// Tests `lambda[sum c_j x_j] = max { lambda[x_j] : c_j != 0 }` on the
/// deterministic sign patterns (for `s <= 3`) followed by `trials` seeded
/// samples from the unit sphere. Each combination is propagated from its
/// initial vector over the FSS horizon.
pub fn incompressibility_test(
    seq: &dyn MatrixSequence,
    fss: &FssRecord,
    trials: usize,
    seed: u64,
    rule: &TailRule,
) -> Result<IncompressibilityReport, SpectrumError> {
    let s = fss.dim();
    let horizon = fss.horizon();
    let members: Vec<f64> = member_exponents(fss, rule)?.iter().map(|e| e.value).collect();
    let mut report = IncompressibilityReport {
        verdict: NormalityVerdict::NormalUpToHorizon,
        horizon,
        member_exponents: members.clone(),
        witness: None,
        combinations_tested: 0,
        degenerate_skipped: 0,
        seed,
    };
    if s == 1 {
        return Ok(report);
    }
    let x1: Vec<Vector> = fss.trajectories().iter().map(|t| t.value(1)).collect();
    let mut candidates = if s <= 3 { sign_patterns(s) } else { Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let c: Vec<f64> = (0..s).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            report.degenerate_skipped += 1;
            continue;
        }
        candidates.push(c.iter().map(|v| v / norm).collect());
    }
    for c in candidates {
        if c.iter().all(|v| *v == 0.0) {
            report.degenerate_skipped += 1;
            continue;
        }
        let y0 = x1.iter().zip(&c).fold(Vector::zeros(s), |acc, (x, cj)| acc + x * *cj);
        let supported_max = members
            .iter()
            .zip(&c)
            .filter(|(_, cj)| **cj != 0.0)
            .map(|(m, _)| *m)
            .fold(f64::NEG_INFINITY, f64::max);
        let traj = propagate(seq, &y0, horizon)?;
        let combined = limsup_estimate(&exponent_profile(&traj, 1)?, rule)?.value;
        report.combinations_tested += 1;
        if combined < supported_max - GROUP_TOL {
            report.verdict = NormalityVerdict::NotNormal;
            report.witness = Some(Witness { coefficients: c, combined_exponent: combined, supported_max });
            break;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CoefficientSequence;

    fn e(i: usize, s: usize) -> Vector {
        let mut v = Vector::zeros(s);
        v[i] = 1.0;
        v
    }

    #[test]
    fn primer3_profile() {
        let seq = CoefficientSequence::diagonal(&[1.0, 2.0]).unwrap();
        let t = propagate(&seq, &e(1, 2), 10).unwrap();
        let p = exponent_profile(&t, 1).unwrap();
        assert!((p.at(10) - 0.9 * 2f64.ln()).abs() < 1e-12);
        assert!((p.at(10) - 0.623832).abs() < 1e-6);
    }

    #[test]
    fn identity_profile_is_zero() {
        let seq = CoefficientSequence::identity(2);
        let t = propagate(&seq, &e(0, 2), 100).unwrap();
        let p = exponent_profile(&t, 3).unwrap();
        assert_eq!(p.len(), 33);
        assert!(p.values.iter().all(|v| *v == 0.0));
        let est = limsup_estimate(&p, &TailRule::default()).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn primer3_limsup() {
        let seq = CoefficientSequence::diagonal(&[1.0, 2.0]).unwrap();
        let t = propagate(&seq, &e(1, 2), 10_000).unwrap();
        let est = limsup_estimate(&exponent_profile(&t, 1).unwrap(), &TailRule::default()).unwrap();
        assert!((est.value - 2f64.ln()).abs() < 1e-4);
        assert_eq!(est.principal, 10_000);
        assert_eq!(est.window_start, 5_001);
        assert!(est.realizing.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn window_rules() {
        assert_eq!(TailRule::default().window_start(10).unwrap(), 6);
        assert_eq!(TailRule::with_tail(1.0).window_start(10).unwrap(), 1);
        assert_eq!(TailRule::with_tail(0.01).window_start(10).unwrap(), 10);
        assert!(TailRule::with_tail(0.0).window_start(10).is_err());
        assert!(matches!(TailRule::default().window_start(0), Err(SpectrumError::EmptyWindow { .. })));
    }

    #[test]
    fn spectra_of_simple_systems() {
        let seq = CoefficientSequence::diagonal(&[1.0, 2.0]).unwrap();
        let est = spectrum_estimate(&seq, 10_000, &TailRule::default()).unwrap();
        assert!(est.exponents[0].abs() < 1e-3);
        assert!((est.exponents[1] - 2f64.ln()).abs() < 1e-3);
        assert_eq!(est.groups.len(), 2);
        assert_eq!(est.checkpoint_stride, 1);

        let est = spectrum_estimate(&CoefficientSequence::identity(3), 100, &TailRule::default()).unwrap();
        assert_eq!(est.exponents, vec![0.0; 3]);
        assert_eq!(est.groups, vec![ExponentGroup { value: 0.0, multiplicity: 3 }]);
    }

    #[test]
    fn grouping() {
        let g = group_exponents(&[0.0, 0.005, 0.5, 0.7, 0.705], 1e-2);
        assert_eq!(g.iter().map(|g| g.multiplicity).collect::<Vec<_>>(), vec![2, 1, 2]);
    }

    #[test]
    fn sign_pattern_order() {
        assert_eq!(sign_patterns(2), vec![vec![0.0, 1.0], vec![1.0, -1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(sign_patterns(3).len(), 13);
    }

    #[test]
    fn primer3_normal_fss_is_normal() {
        let seq = CoefficientSequence::diagonal(&[1.0, 2.0]).unwrap();
        let fss = FssRecord::propagate(&seq, vec![e(0, 2), e(1, 2)], 2_000).unwrap();
        let r = incompressibility_test(&seq, &fss, 16, 7, &TailRule::default()).unwrap();
        assert_eq!(r.verdict, NormalityVerdict::NormalUpToHorizon);
        assert_eq!(r.combinations_tested, 4 + 16);
    }

    #[test]
    fn single_solution_is_normal() {
        let seq = CoefficientSequence::diagonal(&[3.0]).unwrap();
        let fss = FssRecord::propagate(&seq, vec![e(0, 1)], 50).unwrap();
        let r = incompressibility_test(&seq, &fss, 8, 0, &TailRule::default()).unwrap();
        assert_eq!(r.verdict, NormalityVerdict::NormalUpToHorizon);
        assert_eq!(r.combinations_tested, 0);
    }
}
