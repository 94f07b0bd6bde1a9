//! Synthesis of multiplicative perturbations `R(n)` that shift the
//! exponents of a splitted FSS by prescribed amounts.
//!
//! Given shifts `xi_i` with `|xi_i| <= delta`, the plan sets
//! `eta = min xi`, `zeta_i = xi_i - eta`, solves `Lambda_i(mu_i) = lambda_i + zeta_i`
//! and schedules `s_i(n) = eta + mu_i` on `Gamma_i` and `eta` elsewhere.
//! `R(n)` acts on the solution directions as `R(n) x_i(n) = exp(s_i(n)) x_i(n)`,
//! so the perturbed solutions are `exp(sum_{j<k} s_i(j)) x_i(k)`.

mod experiments;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix};
use crate::model::{propagate, CoefficientSequence, MatrixSequence, ModelError};
use crate::spectrum::{exponent_profile, limsup_estimate, ExponentProfile, SpectrumError, TailRule};
use crate::splitness::{gamma_statistics, FssRecord, GammaStatistics, SplitnessError, SplitnessReport, Verdict};
use crate::tolerances::{
    rel_close, BISECTION_MAX_ITER, BISECTION_VALUE_TOL, CLOSED_FORM_REL_TOL, EIGEN_REL_TOL, RHO_THRESHOLD,
    SYNTH_R,
};

pub use experiments::{
    instability_experiment, openness_experiment, ExperimentOptions, InstabilityReport, InstabilityRow,
    OpennessReport,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shift xi[{index}] = {xi} exceeds the budget delta = {delta}")]
    OutOfBudget { index: usize, xi: f64, delta: f64 },
    #[error(
        "estimator inconsistency for solution {solution}: Lambda({mu_max}) = {reached} < target {target}"
    )]
    Bracket { solution: usize, target: f64, reached: f64, mu_max: f64 },
    #[error("|s_{solution}({n})| = {value} exceeds delta1 = {delta1}")]
    ScheduleBound { solution: usize, n: usize, value: f64, delta1: f64 },
    #[error("projections ill-conditioned at n = {n}: {message}")]
    Conditioning { n: usize, message: String },
    #[error("|R({n}) - I| = {norm} violates the budget {bound}")]
    NormBudget { n: usize, norm: f64, bound: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Splitness(#[from] SplitnessError),
}

/// How `delta1` is picked inside `(0, ln(L1 + 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delta1Rule {
    /// `delta1 = ln(L1 + 1) / 2`.
    HalfLog,
    /// `delta1 = t ln(L1 + 1)` for `t` in `(0, 1)`.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConstants {
    pub r: f64,
    pub gamma: f64,
    pub rho: f64,
    pub s: usize,
    pub l1: f64,
    pub delta1: f64,
    pub l: f64,
    pub delta: f64,
    pub beta: f64,
}

impl SynthesisConstants {
    pub fn new(gamma: f64, rho: f64, s: usize, r: f64) -> Result<Self, SynthError> {
        Self::with_rule(gamma, rho, s, r, Delta1Rule::HalfLog)
    }

    pub fn with_rule(gamma: f64, rho: f64, s: usize, r: f64, rule: Delta1Rule) -> Result<Self, SynthError> {
        if !(gamma > 0.0 && gamma <= std::f64::consts::FRAC_PI_2) {
            return Err(SynthError::InvalidInput(format!("gamma must lie in (0, pi/2], got {gamma}")));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(SynthError::InvalidInput(format!("rho must lie in (0, 1], got {rho}")));
        }
        if s == 0 {
            return Err(SynthError::InvalidInput("dimension must be positive".into()));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(SynthError::InvalidInput(format!("r must lie in (0, 1), got {r}")));
        }
        let sin = gamma.sin();
        let l1 = r * sin / s as f64;
        let t = match rule {
            Delta1Rule::HalfLog => 0.5,
            Delta1Rule::Fraction(t) if t > 0.0 && t < 1.0 => t,
            Delta1Rule::Fraction(t) => {
                return Err(SynthError::InvalidInput(format!("delta1 fraction must lie in (0, 1), got {t}")))
            }
        };
        let delta1 = t * l1.ln_1p();
        let l = l1 / delta1;
        Ok(Self {
            r,
            gamma,
            rho,
            s,
            l1,
            delta1,
            l,
            delta: delta1 * rho / 3.0,
            beta: l * s as f64 * (1.0 + 2.0 / rho) / sin,
        })
    }

    /// Constants for a splitted FSS: the smallest chosen `gamma` and the
    /// smallest measured density, floored at the verdict threshold.
    pub fn from_report(report: &SplitnessReport, r: f64) -> Result<Self, SynthError> {
        if report.splitted != Verdict::Yes {
            return Err(SynthError::Precondition(format!(
                "FSS is not splitted at horizon {} (verdict {:?})",
                report.horizon, report.splitted
            )));
        }
        let gamma = report.gamma_min().ok_or_else(|| SynthError::Precondition("no gamma certified".into()))?;
        Self::new(gamma, report.rho_min().clamp(RHO_THRESHOLD, 1.0), report.verdicts.len(), r)
    }

    pub fn default_r() -> f64 {
        SYNTH_R
    }

    /// `|exp(tau) - 1| <= L |tau|` on a grid over `[-20, delta1]`.
    pub fn lipschitz_holds(&self) -> bool {
        (0..=2000).all(|j| {
            let tau = -20.0 + (self.delta1 + 20.0) * j as f64 / 2000.0;
            tau.exp_m1().abs() <= self.l * tau.abs() * (1.0 + 1e-12)
        })
    }
}

/// `Lambda_i(mu) = max over the tail window of f_i(k) + mu g_i(k)`, `sigma = 1`.
#[derive(Debug, Clone)]
pub struct LambdaMu {
    pub solution: usize,
    pub profile: ExponentProfile,
    pub stats: GammaStatistics,
    pub rule: TailRule,
    pub lambda_hat: f64,
    pub principal: usize,
    window_start: usize,
}

impl LambdaMu {
    pub fn new(fss: &FssRecord, i: usize, gamma: f64, horizon: usize, rule: &TailRule) -> Result<Self, SynthError> {
        let mut profile = exponent_profile(fss.trajectory(i), 1)?;
        profile.values.truncate(horizon);
        let est = limsup_estimate(&profile, rule)?;
        let stats = gamma_statistics(fss, i, gamma, 1, profile.len())?;
        Ok(Self {
            solution: i,
            profile,
            stats,
            rule: *rule,
            lambda_hat: est.value,
            principal: est.principal,
            window_start: est.window_start,
        })
    }

    /// Density at the principal realizing index.
    pub fn rho_hat(&self) -> f64 {
        self.stats.density(self.principal)
    }

    pub fn eval(&self, mu: f64) -> f64 {
        (self.window_start..=self.profile.len())
            .map(|k| self.profile.at(k) + mu * self.stats.density(k))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bisection for `Lambda(mu) = lambda_hat + zeta` on `[0, zeta / rho]`.
    pub fn solve(&self, zeta: f64, rho: f64) -> Result<f64, SynthError> {
        if zeta < 0.0 || !(rho > 0.0) {
            return Err(SynthError::InvalidInput(format!("need zeta >= 0 and rho > 0, got {zeta}, {rho}")));
        }
        if zeta == 0.0 {
            return Ok(0.0);
        }
        let target = self.lambda_hat + zeta;
        let (mut lo, mut hi) = (0.0, zeta / rho);
        let reached = self.eval(hi);
        if reached < target - BISECTION_VALUE_TOL {
            return Err(SynthError::Bracket { solution: self.solution, target, reached, mu_max: hi });
        }
        if (reached - target).abs() <= BISECTION_VALUE_TOL {
            return Ok(hi);
        }
        for _ in 0..BISECTION_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            let v = self.eval(mid);
            if (v - target).abs() <= BISECTION_VALUE_TOL {
                return Ok(mid);
            }
            if v < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }
}

pub fn lambda_mu(
    fss: &FssRecord,
    i: usize,
    mu: f64,
    gamma: f64,
    horizon: usize,
    rule: &TailRule,
) -> Result<f64, SynthError> {
    Ok(LambdaMu::new(fss, i, gamma, horizon, rule)?.eval(mu))
}

pub fn solve_mu(
    fss: &FssRecord,
    i: usize,
    zeta: f64,
    rho: f64,
    gamma: f64,
    horizon: usize,
    rule: &TailRule,
) -> Result<f64, SynthError> {
    LambdaMu::new(fss, i, gamma, horizon, rule)?.solve(zeta, rho)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationPlan {
    pub constants: SynthesisConstants,
    pub horizon: usize,
    pub rule: TailRule,
    pub xi: Vec<f64>,
    pub eta: f64,
    pub zeta: Vec<f64>,
    pub mu: Vec<f64>,
    pub epsilon: f64,
    pub lambda_hat: Vec<f64>,
    /// `Lambda_i(mu_i)` at the solved `mu_i`.
    pub lambda_at_mu: Vec<f64>,
    pub gamma_set_sizes: Vec<usize>,
    pub max_abs_schedule: f64,
    /// `beta * epsilon`.
    pub certified_bound: f64,
    /// `gamma_sets[i][n - 1]` is `n` in `Gamma_i`.
    #[serde(skip)]
    pub gamma_sets: Vec<Vec<bool>>,
}

impl PerturbationPlan {
    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// `s_i(n)`.
    pub fn schedule(&self, i: usize, n: usize) -> f64 {
        if self.gamma_sets[i][n - 1] {
            self.eta + self.mu[i]
        } else {
            self.eta
        }
    }

    pub fn schedule_at(&self, n: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.schedule(i, n)).collect()
    }
}

pub fn build_plan(
    fss: &FssRecord,
    xi: &[f64],
    constants: &SynthesisConstants,
    horizon: usize,
    rule: &TailRule,
) -> Result<PerturbationPlan, SynthError> {
    let s = fss.dim();
    if xi.len() != s {
        return Err(SynthError::InvalidInput(format!("{} shifts given for an FSS of size {s}", xi.len())));
    }
    if horizon == 0 || horizon > fss.horizon() {
        return Err(SynthError::InvalidInput(format!(
            "plan horizon {horizon} outside the FSS horizon {}",
            fss.horizon()
        )));
    }
    if let Some((index, &x)) = xi.iter().enumerate().find(|(_, x)| !(x.abs() <= constants.delta)) {
        return Err(SynthError::OutOfBudget { index, xi: x, delta: constants.delta });
    }
    let eta = xi.iter().copied().fold(f64::INFINITY, f64::min);
    let zeta: Vec<f64> = xi.iter().map(|x| x - eta).collect();
    let epsilon = xi.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut mu = Vec::with_capacity(s);
    let mut lambda_hat = Vec::with_capacity(s);
    let mut lambda_at_mu = Vec::with_capacity(s);
    let mut gamma_sets = Vec::with_capacity(s);
    for (i, z) in zeta.iter().enumerate() {
        let lm = LambdaMu::new(fss, i, constants.gamma, horizon, rule)?;
        let m = lm.solve(*z, constants.rho)?;
        lambda_hat.push(lm.lambda_hat);
        lambda_at_mu.push(lm.eval(m));
        mu.push(m);
        gamma_sets.push(lm.stats.flags);
    }
    let mut plan = PerturbationPlan {
        constants: *constants,
        horizon,
        rule: *rule,
        xi: xi.to_vec(),
        eta,
        zeta,
        mu,
        epsilon,
        lambda_hat,
        lambda_at_mu,
        gamma_set_sizes: gamma_sets.iter().map(|g| g.iter().filter(|f| **f).count()).collect(),
        max_abs_schedule: 0.0,
        certified_bound: constants.beta * epsilon,
        gamma_sets,
    };
    for n in 1..=horizon {
        for i in 0..s {
            let v = plan.schedule(i, n).abs();
            if v > constants.delta1 {
                return Err(SynthError::ScheduleBound { solution: i, n, value: v, delta1: constants.delta1 });
            }
            plan.max_abs_schedule = plan.max_abs_schedule.max(v);
        }
    }
    Ok(plan)
}

/// `R(n) = sum_i P_n^i exp(s_i(n))`; equal exponents give `exp(s) I` directly.
pub fn perturbation_at(plan: &PerturbationPlan, fss: &FssRecord, n: usize) -> Result<Matrix, SynthError> {
    let s = plan.dim();
    let sched = plan.schedule_at(n);
    if sched.iter().all(|v| *v == sched[0]) {
        return Ok(Matrix::identity(s, s) * sched[0].exp());
    }
    let projections = linalg::oblique_projections(&fss.directions(n))
        .map_err(|e| SynthError::Conditioning { n, message: e.to_string() })?;
    Ok(projections.iter().zip(&sched).fold(Matrix::zeros(s, s), |acc, (p, si)| acc + p * si.exp()))
}

/// `R(1), ..., R(horizon)` with the measured deviation from the identity.
#[derive(Debug, Clone)]
pub struct RSequence {
    matrices: Vec<Matrix>,
    pub sup_deviation: f64,
    pub sup_deviation_at: usize,
    /// Largest relative residual of `R(n) d_i(n) = exp(s_i(n)) d_i(n)`.
    pub eigen_residual: f64,
}

impl RSequence {
    pub fn build(plan: &PerturbationPlan, fss: &FssRecord) -> Result<Self, SynthError> {
        let s = plan.dim();
        let mut matrices = Vec::with_capacity(plan.horizon);
        let (mut sup, mut at, mut eig) = (0.0f64, 1usize, 0.0f64);
        let bound = plan.certified_bound.min(plan.constants.r);
        for n in 1..=plan.horizon {
            let r = perturbation_at(plan, fss, n)?;
            let dev = linalg::spectral_norm(&(&r - Matrix::identity(s, s)))
                .map_err(|e| SynthError::Conditioning { n, message: e.to_string() })?;
            if dev > sup {
                sup = dev;
                at = n;
            }
            if !(dev < plan.constants.r) || dev > bound * (1.0 + 1e-12) + 1e-15 {
                return Err(SynthError::NormBudget { n, norm: dev, bound });
            }
            for (i, d) in fss.directions(n).iter().enumerate() {
                let want = d * plan.schedule(i, n).exp();
                let res = (&r * d - &want).norm() / want.norm();
                eig = eig.max(res);
            }
            matrices.push(r);
        }
        Ok(Self { matrices, sup_deviation: sup, sup_deviation_at: at, eigen_residual: eig })
    }

    pub fn at(&self, n: usize) -> &Matrix {
        &self.matrices[n - 1]
    }

    pub fn into_sequence(self) -> Result<CoefficientSequence, SynthError> {
        Ok(CoefficientSequence::tabulated(self.matrices)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    /// `max_n |R(n) - I|`.
    pub sup_deviation: f64,
    pub sup_deviation_at: usize,
    pub certified_bound: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationOutcome {
    pub horizon: usize,
    pub original_exponents: Vec<f64>,
    pub perturbed_exponents: Vec<f64>,
    pub target_shifts: Vec<f64>,
    pub achieved_shifts: Vec<f64>,
    pub norm: NormReport,
    pub eigen_residual: f64,
    pub eigen_ok: bool,
    /// Largest relative gap between simulated and closed-form log-norms.
    pub closed_form_residual: f64,
    pub closed_form_ok: bool,
    /// Simulated perturbed log-norms `[i][k - 1]`.
    #[serde(skip)]
    pub perturbed_log_norms: Vec<Vec<f64>>,
}

/// Simulates `x(n+1) = A(n) R(n) x(n)` from the FSS initial vectors and
/// compares with `exp(sum_{j<k} s_i(j)) x_i(k)` at every step.
pub fn execute_plan(
    seq: Arc<dyn MatrixSequence>,
    fss: &FssRecord,
    plan: &PerturbationPlan,
) -> Result<PerturbationOutcome, SynthError> {
    let horizon = plan.horizon;
    let rs = RSequence::build(plan, fss)?;
    let norm = NormReport {
        sup_deviation: rs.sup_deviation,
        sup_deviation_at: rs.sup_deviation_at,
        certified_bound: plan.certified_bound,
        r: plan.constants.r,
    };
    let eigen_residual = rs.eigen_residual;
    let perturbed = CoefficientSequence::product(seq, Arc::new(rs.into_sequence()?))?;
    let mut out = PerturbationOutcome {
        horizon,
        original_exponents: Vec::new(),
        perturbed_exponents: Vec::new(),
        target_shifts: plan.xi.clone(),
        achieved_shifts: Vec::new(),
        norm,
        eigen_residual,
        eigen_ok: eigen_residual <= EIGEN_REL_TOL,
        closed_form_residual: 0.0,
        closed_form_ok: true,
        perturbed_log_norms: Vec::new(),
    };
    for (i, x1) in fss.initial().iter().enumerate() {
        let orig = fss.trajectory(i);
        let sim = propagate(&perturbed, x1, horizon)?;
        let mut acc = 0.0;
        for k in 1..=horizon {
            if k > 1 {
                acc += plan.schedule(i, k - 1);
            }
            let cf = acc + orig.log_norm(k);
            let got = sim.log_norm(k);
            let res = (got - cf).abs() / got.abs().max(cf.abs()).max(1.0);
            out.closed_form_residual = out.closed_form_residual.max(res);
        }
        let mut p0 = exponent_profile(orig, 1)?;
        p0.values.truncate(horizon);
        let before = limsup_estimate(&p0, &plan.rule)?.value;
        let after = limsup_estimate(&exponent_profile(&sim, 1)?, &plan.rule)?.value;
        out.original_exponents.push(before);
        out.perturbed_exponents.push(after);
        out.achieved_shifts.push(after - before);
        out.perturbed_log_norms.push(sim.log_norms().to_vec());
    }
    out.closed_form_ok = rel_close(out.closed_form_residual, 0.0, CLOSED_FORM_REL_TOL);
    Ok(out)
}
