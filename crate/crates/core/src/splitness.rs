//! Angle statistics of a fundamental solution system and finite-horizon
//! broken-away / splitted verdicts.

use std::f64::consts::FRAC_2_PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, Vector};
use crate::model::{propagate, MatrixSequence, ModelError, TrajectoryLog};
use crate::spectrum::{exponent_profile, limsup_estimate, SpectrumError, TailRule};
use crate::tolerances::{default_gamma_grid, RHO_THRESHOLD, SINGULAR_RATIO};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitnessError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("initial vectors are not independent (sigma_min / sigma_max = {ratio:e})")]
    Dependent { ratio: f64 },
    #[error("Lyapunov transformation L({n}) is singular")]
    SingularTransformation { n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// `s` solutions from independent initial vectors, with the angle
/// `phi_i(n)` of each to the span of the others.
#[derive(Debug, Clone, PartialEq)]
pub struct FssRecord {
    initial: Vec<Vector>,
    trajectories: Vec<TrajectoryLog>,
    /// `angles[i][n - 1] = phi_i(n)`.
    angles: Vec<Vec<f64>>,
    /// Indices where the directions are numerically dependent.
    collapsed: Vec<usize>,
}

impl FssRecord {
    pub fn propagate(
        seq: &dyn MatrixSequence,
        initial: Vec<Vector>,
        horizon: usize,
    ) -> Result<Self, SplitnessError> {
        check_independent(&initial, seq.dim())?;
        let trajectories = initial
            .iter()
            .map(|x| propagate(seq, x, horizon))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_trajectories(initial, trajectories)
    }

    pub fn from_trajectories(
        initial: Vec<Vector>,
        trajectories: Vec<TrajectoryLog>,
    ) -> Result<Self, SplitnessError> {
        let s = trajectories.len();
        if s == 0 || initial.len() != s {
            return Err(SplitnessError::InvalidInput("an FSS needs one trajectory per initial vector".into()));
        }
        let horizon = trajectories[0].horizon();
        if trajectories.iter().any(|t| t.dim() != s || t.horizon() != horizon) {
            return Err(SplitnessError::InvalidInput(format!(
                "an FSS of a {s}-dimensional system needs {s} trajectories of equal length"
            )));
        }
        let (angles, collapsed) = angle_profile(&trajectories);
        Ok(Self { initial, trajectories, angles, collapsed })
    }

    pub fn dim(&self) -> usize {
        self.trajectories.len()
    }

    pub fn horizon(&self) -> usize {
        self.trajectories[0].horizon()
    }

    pub fn initial(&self) -> &[Vector] {
        &self.initial
    }

    pub fn trajectories(&self) -> &[TrajectoryLog] {
        &self.trajectories
    }

    pub fn trajectory(&self, i: usize) -> &TrajectoryLog {
        &self.trajectories[i]
    }

    pub fn angle(&self, i: usize, n: usize) -> f64 {
        self.angles[i][n - 1]
    }

    pub fn angles(&self, i: usize) -> &[f64] {
        &self.angles[i]
    }

    /// Unit directions of all members at `n`.
    pub fn directions(&self, n: usize) -> Vec<Vector> {
        self.trajectories.iter().map(|t| t.direction_vector(n)).collect()
    }

    /// Indices `n` at which the basis was numerically collapsed.
    pub fn collapsed(&self) -> &[usize] {
        &self.collapsed
    }

    pub fn warnings(&self) -> Vec<String> {
        match self.collapsed.first() {
            None => Vec::new(),
            Some(n) => vec![format!(
                "solution directions numerically dependent at {} of {} steps, first at n = {n}",
                self.collapsed.len(),
                self.horizon()
            )],
        }
    }
}

fn check_independent(initial: &[Vector], s: usize) -> Result<(), SplitnessError> {
    if initial.len() != s || initial.iter().any(|v| v.len() != s) {
        return Err(SplitnessError::InvalidInput(format!(
            "an FSS of a {s}-dimensional system needs {s} initial vectors of length {s}"
        )));
    }
    let sv = linalg::singular_values(&Matrix::from_columns(initial)).map_err(|e| SplitnessError::InvalidInput(e.to_string()))?;
    let ratio = sv[s - 1] / sv[0];
    if !(ratio > SINGULAR_RATIO) {
        return Err(SplitnessError::Dependent { ratio });
    }
    Ok(())
}

fn det(dirs: &[Vector]) -> f64 {
    if dirs.len() == 2 {
        dirs[0][0] * dirs[1][1] - dirs[0][1] * dirs[1][0]
    } else {
        Matrix::from_columns(dirs).determinant()
    }
}

/// Below this the projection residual has lost relative accuracy and the
/// volume formula `sin phi_i = |det D| / vol(others)` is used instead.
const SMALL_ANGLE: f64 = 1e-6;

/// Angle of each unit direction to the span of the others; dependent
/// others give `0`.
fn angles_at(dirs: &[Vector]) -> Vec<f64> {
    let s = dirs.len();
    if s == 1 {
        return vec![std::f64::consts::FRAC_PI_2];
    }
    let mut full_det = None;
    (0..s)
        .map(|i| {
            let mut q: Vec<Vector> = Vec::with_capacity(s - 1);
            for (j, v) in dirs.iter().enumerate() {
                if j == i {
                    continue;
                }
                let mut w = v.clone();
                for _ in 0..2 {
                    for u in &q {
                        let c = u.dot(&w);
                        w.axpy(-c, u, 1.0);
                    }
                }
                let nw = w.norm();
                if !(nw > SINGULAR_RATIO) {
                    return 0.0;
                }
                q.push(w / nw);
            }
            let phi = linalg::residual_angle(&dirs[i], &q);
            if phi >= SMALL_ANGLE {
                return phi;
            }
            let vol = if s == 2 {
                1.0
            } else {
                let others: Vec<Vector> =
                    dirs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.clone()).collect();
                let o = Matrix::from_columns(&others);
                (o.transpose() * o).determinant().abs().sqrt()
            };
            let d = *full_det.get_or_insert_with(|| det(dirs).abs());
            (d / vol).min(1.0).asin()
        })
        .collect()
}

/// `phi_i(n)` from unit directions only, plus the indices at which some
/// angle fell below the singularity tolerance.
pub fn angle_profile(trajectories: &[TrajectoryLog]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let s = trajectories.len();
    let horizon = trajectories.first().map_or(0, |t| t.horizon());
    let mut angles = vec![Vec::with_capacity(horizon); s];
    let mut collapsed = Vec::new();
    for n in 1..=horizon {
        let dirs: Vec<Vector> = trajectories.iter().map(|t| t.direction_vector(n)).collect();
        let phi = angles_at(&dirs);
        if phi.iter().any(|p| *p <= SINGULAR_RATIO) {
            collapsed.push(n);
        }
        for (a, p) in angles.iter_mut().zip(phi) {
            a.push(p);
        }
    }
    (angles, collapsed)
}

/// Membership of `j sigma` in `Gamma_i^gamma(sigma)` for `j = 1..=K`, with
/// running counts `N(k)` and densities `g(k) = N(k) / k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaStatistics {
    pub solution: usize,
    pub gamma: f64,
    pub sigma: usize,
    pub flags: Vec<bool>,
    pub counts: Vec<usize>,
}

impl GammaStatistics {
    pub fn count(&self, k: usize) -> usize {
        self.counts[k - 1]
    }

    pub fn density(&self, k: usize) -> f64 {
        self.counts[k - 1] as f64 / k as f64
    }

    pub fn densities(&self) -> Vec<f64> {
        self.counts.iter().enumerate().map(|(j, c)| *c as f64 / (j + 1) as f64).collect()
    }
}

pub fn gamma_statistics(
    fss: &FssRecord,
    i: usize,
    gamma: f64,
    sigma: usize,
    kmax: usize,
) -> Result<GammaStatistics, SplitnessError> {
    if i >= fss.dim() {
        return Err(SplitnessError::InvalidInput(format!("no solution {i} in an FSS of size {}", fss.dim())));
    }
    if !(gamma > 0.0 && gamma <= std::f64::consts::FRAC_PI_2) {
        return Err(SplitnessError::InvalidInput(format!("gamma must lie in (0, pi/2], got {gamma}")));
    }
    if sigma == 0 || kmax == 0 || kmax * sigma > fss.horizon() {
        return Err(SplitnessError::InvalidInput(format!(
            "need 1 <= K sigma <= horizon, got K = {kmax}, sigma = {sigma}, horizon = {}",
            fss.horizon()
        )));
    }
    let phi = fss.angles(i);
    let flags: Vec<bool> = (1..=kmax).map(|j| phi[j * sigma - 1] >= gamma).collect();
    let counts = flags
        .iter()
        .scan(0usize, |acc, f| {
            *acc += *f as usize;
            Some(*acc)
        })
        .collect();
    Ok(GammaStatistics { solution: i, gamma, sigma, flags, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Yes,
    No,
    Inconclusive,
}

/// Parameters of a broken-away scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub gamma_grid: Vec<f64>,
    pub sigma: usize,
    pub rule: TailRule,
    pub rho_threshold: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { gamma_grid: default_gamma_grid(), sigma: 1, rule: TailRule::default(), rho_threshold: RHO_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaScanRow {
    pub gamma: f64,
    /// Density at the principal realizing index.
    pub rho_hat: f64,
    pub g_min_realizing: f64,
    pub g_max_realizing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrokenAwayVerdict {
    pub solution: usize,
    pub sigma: usize,
    pub horizon: usize,
    pub exponent: f64,
    /// Principal realizing index `n = k sigma`.
    pub principal_index: Option<usize>,
    pub realizing_indices: Vec<usize>,
    pub gamma: Option<f64>,
    pub rho_hat: f64,
    pub rho_threshold: f64,
    pub verdict: Verdict,
    pub scan: Vec<GammaScanRow>,
}

impl BrokenAwayVerdict {
    pub fn is_broken_away(&self) -> bool {
        self.verdict == Verdict::Yes
    }
}

/// Evaluates the density of `Gamma_i^gamma` at the realizing indices of
/// solution `i` for every `gamma` in the grid.
///
/// `rho_hat(gamma)` is the density at the principal realizing index. The
/// reported `gamma` maximizes `rho_hat * sin(gamma)` (larger `gamma` on
/// ties), which is the quantity the perturbation budget scales with.
pub fn broken_away_scan(
    fss: &FssRecord,
    i: usize,
    opts: &ScanOptions,
    horizon: usize,
) -> Result<BrokenAwayVerdict, SplitnessError> {
    if horizon > fss.horizon() || horizon == 0 {
        return Err(SplitnessError::InvalidInput(format!(
            "scan horizon {horizon} outside the FSS horizon {}",
            fss.horizon()
        )));
    }
    if opts.gamma_grid.is_empty() {
        return Err(SplitnessError::InvalidInput("gamma grid is empty".into()));
    }
    let sigma = opts.sigma;
    let traj = fss.trajectory(i);
    let mut profile = exponent_profile(traj, sigma)?;
    let kmax = horizon / sigma;
    profile.values.truncate(kmax);
    let est = match limsup_estimate(&profile, &opts.rule) {
        Ok(e) => e,
        Err(SpectrumError::EmptyWindow { .. }) => {
            return Ok(BrokenAwayVerdict {
                solution: i,
                sigma,
                horizon,
                exponent: f64::NAN,
                principal_index: None,
                realizing_indices: Vec::new(),
                gamma: None,
                rho_hat: 0.0,
                rho_threshold: opts.rho_threshold,
                verdict: Verdict::Inconclusive,
                scan: Vec::new(),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let mut scan = Vec::with_capacity(opts.gamma_grid.len());
    let mut best: Option<(f64, f64, f64)> = None;
    for &gamma in &opts.gamma_grid {
        let st = gamma_statistics(fss, i, gamma, sigma, kmax)?;
        let rho_hat = st.density(est.principal);
        let gs = est.realizing.indices.iter().map(|&k| st.density(k));
        let (gmin, gmax) = gs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), g| (a.min(g), b.max(g)));
        scan.push(GammaScanRow { gamma, rho_hat, g_min_realizing: gmin, g_max_realizing: gmax });
        let score = rho_hat * gamma.sin();
        let better = match best {
            None => true,
            Some((bs, bg, _)) => score > bs || (score == bs && gamma > bg),
        };
        if better {
            best = Some((score, gamma, rho_hat));
        }
    }
    let (_, gamma, rho_hat) = best.expect("grid is nonempty");
    let verdict = if rho_hat >= opts.rho_threshold { Verdict::Yes } else { Verdict::No };
    Ok(BrokenAwayVerdict {
        solution: i,
        sigma,
        horizon,
        exponent: est.value,
        principal_index: Some(est.principal * sigma),
        realizing_indices: est.realizing.indices.iter().map(|k| k * sigma).collect(),
        gamma: Some(gamma),
        rho_hat,
        rho_threshold: opts.rho_threshold,
        verdict,
        scan,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitnessReport {
    pub verdicts: Vec<BrokenAwayVerdict>,
    pub splitted: Verdict,
    pub horizon: usize,
    pub warnings: Vec<String>,
}

impl SplitnessReport {
    /// `min_i rho_hat_i`, the density entering the synthesis constants.
    pub fn rho_min(&self) -> f64 {
        self.verdicts.iter().map(|v| v.rho_hat).fold(f64::INFINITY, f64::min)
    }

    /// Smallest `gamma` chosen by any solution's scan.
    pub fn gamma_min(&self) -> Option<f64> {
        self.verdicts.iter().map(|v| v.gamma).collect::<Option<Vec<_>>>().map(|g| g.into_iter().fold(f64::INFINITY, f64::min))
    }
}

/// Every solution scanned; splitted iff all are broken away.
pub fn splitness_report(fss: &FssRecord, opts: &ScanOptions, horizon: usize) -> Result<SplitnessReport, SplitnessError> {
    let verdicts = (0..fss.dim())
        .map(|i| broken_away_scan(fss, i, opts, horizon))
        .collect::<Result<Vec<_>, _>>()?;
    let splitted = if verdicts.iter().any(|v| v.verdict == Verdict::No) {
        Verdict::No
    } else if verdicts.iter().all(|v| v.verdict == Verdict::Yes) {
        Verdict::Yes
    } else {
        Verdict::Inconclusive
    };
    Ok(SplitnessReport { verdicts, splitted, horizon, warnings: fss.warnings() })
}

/// Verdicts for solution `i` at two samplings of the index axis.
pub fn sigma_invariance_check(
    fss: &FssRecord,
    i: usize,
    sigma0: usize,
    sigma1: usize,
    opts: &ScanOptions,
    horizon: usize,
) -> Result<(BrokenAwayVerdict, BrokenAwayVerdict), SplitnessError> {
    let run = |sigma| broken_away_scan(fss, i, &ScanOptions { sigma, ..opts.clone() }, horizon);
    Ok((run(sigma0)?, run(sigma1)?))
}

/// A change of variables `y = L(n) x` with bounded `L` and `L^-1` on the
/// scanned horizon.
#[derive(Debug, Clone)]
pub struct LyapunovTransformation {
    generator: Arc<dyn MatrixSequence>,
    pub sup_norm: f64,
    pub sup_inverse_norm: f64,
    pub horizon: usize,
}

impl LyapunovTransformation {
    /// Scans `L(1), ..., L(horizon + 1)` for the bounds.
    pub fn new(generator: Arc<dyn MatrixSequence>, horizon: usize) -> Result<Self, SplitnessError> {
        let (mut sup_norm, mut sup_inverse_norm) = (0.0f64, 0.0f64);
        for n in 1..=horizon + 1 {
            let (smax, smin) = linalg::check_nonsingular(&generator.at(n)?).map_err(|e| match e {
                LinalgError::Singular { .. } => SplitnessError::SingularTransformation { n },
                other => SplitnessError::InvalidInput(other.to_string()),
            })?;
            sup_norm = sup_norm.max(smax);
            sup_inverse_norm = sup_inverse_norm.max(1.0 / smin);
        }
        Ok(Self { generator, sup_norm, sup_inverse_norm, horizon })
    }

    pub fn at(&self, n: usize) -> Result<Matrix, ModelError> {
        self.generator.at(n)
    }

    /// `c = (2/pi) (sup|L| sup|L^-1|)^(1-s)`, the uniform angle contraction.
    pub fn angle_bound_constant(&self, s: usize) -> f64 {
        FRAC_2_PI * (self.sup_norm * self.sup_inverse_norm).powi(1 - s as i32)
    }
}

/// `B(n) = L(n+1) A(n) L(n)^-1`.
#[derive(Debug, Clone)]
pub struct TransformedSequence {
    base: Arc<dyn MatrixSequence>,
    transform: Arc<dyn MatrixSequence>,
}

impl MatrixSequence for TransformedSequence {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn at(&self, n: usize) -> Result<Matrix, ModelError> {
        let l = self.transform.at(n)?;
        let linv = linalg::inverse(&l).map_err(|_| ModelError::NotLyapunov { n })?;
        Ok(self.transform.at(n + 1)? * self.base.at(n)? * linv)
    }
}

/// The transformed system and the transformed FSS `y_i(n) = L(n) x_i(n)`.
pub fn apply_lyapunov_transformation(
    seq: Arc<dyn MatrixSequence>,
    fss: &FssRecord,
    lt: &LyapunovTransformation,
) -> Result<(TransformedSequence, FssRecord), SplitnessError> {
    let s = fss.dim();
    if seq.dim() != s || lt.generator.dim() != s {
        return Err(SplitnessError::InvalidInput("transformation dimension mismatch".into()));
    }
    let horizon = fss.horizon();
    if lt.horizon < horizon {
        return Err(SplitnessError::InvalidInput(format!(
            "transformation validated up to {}, FSS runs to {horizon}",
            lt.horizon
        )));
    }
    let ls = (1..=horizon).map(|n| lt.at(n)).collect::<Result<Vec<_>, _>>()?;
    let trajectories = fss
        .trajectories()
        .iter()
        .map(|t| {
            let mut dirs = Vec::with_capacity(s * horizon);
            let mut logs = Vec::with_capacity(horizon);
            for (n, l) in (1..=horizon).zip(&ls) {
                let y = l * t.direction_vector(n);
                let ny = y.norm();
                dirs.extend((y / ny).iter());
                logs.push(t.log_norm(n) + ny.ln());
            }
            TrajectoryLog::from_parts(s, dirs, logs)
        })
        .collect();
    let initial = fss.initial().iter().map(|x| &ls[0] * x).collect();
    let out = FssRecord::from_trajectories(initial, trajectories)?;
    Ok((TransformedSequence { base: seq, transform: lt.generator.clone() }, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CoefficientSequence;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn primer3() -> CoefficientSequence {
        CoefficientSequence::diagonal(&[1.0, 2.0]).unwrap()
    }

    #[test]
    fn primer3_normal_angles_are_right() {
        let fss = FssRecord::propagate(&primer3(), vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])], 200).unwrap();
        for i in 0..2 {
            assert!(fss.angles(i).iter().all(|p| *p == FRAC_PI_2));
        }
        assert!(fss.collapsed().is_empty());
        let st = gamma_statistics(&fss, 0, FRAC_PI_2, 1, 200).unwrap();
        assert!(st.densities().iter().all(|g| *g == 1.0));
    }

    #[test]
    fn non_normal_angles_decay() {
        let fss = FssRecord::propagate(&primer3(), vec![v(&[0.0, 1.0]), v(&[1.0, 1.0])], 1200).unwrap();
        let phi = fss.angles(0);
        assert!((phi[0] - FRAC_PI_4).abs() < 1e-15);
        assert!(phi.windows(2).take(1000).all(|w| w[1] < w[0]));
        assert!(*phi.last().unwrap() < 1e-300);
        assert!(!fss.collapsed().is_empty());
        assert_eq!(fss.warnings().len(), 1);
    }

    #[test]
    fn dependent_initial_rejected() {
        let err = FssRecord::propagate(&primer3(), vec![v(&[1.0, 1.0]), v(&[2.0, 2.0])], 5).unwrap_err();
        assert!(matches!(err, SplitnessError::Dependent { .. }));
    }

    #[test]
    fn gamma_above_all_angles_gives_zero() {
        let fss = FssRecord::propagate(&primer3(), vec![v(&[0.0, 1.0]), v(&[1.0, 1.0])], 100).unwrap();
        let st = gamma_statistics(&fss, 1, FRAC_PI_2, 1, 100).unwrap();
        assert!(st.counts.iter().all(|c| *c == 0));
    }

    #[test]
    fn primer3_verdicts() {
        let opts = ScanOptions::default();
        let fss = FssRecord::propagate(&primer3(), vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])], 1000).unwrap();
        let rep = splitness_report(&fss, &opts, 1000).unwrap();
        assert_eq!(rep.splitted, Verdict::Yes);
        for vd in &rep.verdicts {
            assert_eq!(vd.rho_hat, 1.0);
            assert_eq!(vd.gamma, Some(FRAC_PI_2));
        }

        let fss = FssRecord::propagate(&primer3(), vec![v(&[0.0, 1.0]), v(&[1.0, 1.0])], 1000).unwrap();
        let rep = splitness_report(&fss, &opts, 1000).unwrap();
        assert_eq!(rep.splitted, Verdict::No);
        assert!(rep.verdicts.iter().all(|vd| vd.verdict == Verdict::No));
    }

    #[test]
    fn short_horizon_is_inconclusive() {
        let fss = FssRecord::propagate(&primer3(), vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])], 4).unwrap();
        let opts = ScanOptions { sigma: 5, ..ScanOptions::default() };
        assert!(broken_away_scan(&fss, 0, &opts, 4).is_err());
        let vd = broken_away_scan(&fss, 0, &ScanOptions { sigma: 4, ..ScanOptions::default() }, 4).unwrap();
        assert_eq!(vd.verdict, Verdict::Yes);
    }

    #[test]
    fn identity_transformation_changes_nothing() {
        let seq: Arc<dyn MatrixSequence> = Arc::new(primer3());
        let fss = FssRecord::propagate(seq.as_ref(), vec![v(&[1.0, 0.0]), v(&[1.0, 1.0])], 50).unwrap();
        let lt = LyapunovTransformation::new(Arc::new(CoefficientSequence::identity(2)), 50).unwrap();
        let (b, y) = apply_lyapunov_transformation(seq.clone(), &fss, &lt).unwrap();
        assert_eq!(b.at(3).unwrap(), seq.at(3).unwrap());
        assert_eq!(y.angles(0), fss.angles(0));
        assert!((lt.angle_bound_constant(2) - FRAC_2_PI).abs() < 1e-15);
    }
}
