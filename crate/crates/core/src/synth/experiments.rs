//! Instability of a spectrum carried by a non-normal splitted FSS, and local
//! assignability around a simple spectrum carried by a normal splitted FSS.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{build_plan, execute_plan, SynthError, SynthesisConstants};
use crate::model::MatrixSequence;
use crate::spectrum::{incompressibility_test, member_exponents, spectrum_estimate, NormalityVerdict};
use crate::splitness::{splitness_report, FssRecord, ScanOptions};
use crate::tolerances::{GROUP_TOL, INCOMPRESSIBILITY_TRIALS, SYNTH_R};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub scan: ScanOptions,
    pub r: f64,
    pub trials: usize,
    pub seed: u64,
    /// Horizon for estimating the reference spectrum; defaults to the FSS horizon.
    pub spectrum_horizon: Option<usize>,
    /// Use this spectrum instead of estimating one.
    pub reference_spectrum: Option<Vec<f64>>,
    /// Accepted distance between assigned and target exponents.
    pub assign_tol: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            scan: ScanOptions::default(),
            r: SYNTH_R,
            trials: INCOMPRESSIBILITY_TRIALS,
            seed: 0,
            spectrum_horizon: None,
            reference_spectrum: None,
            assign_tol: 1e-3,
        }
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    out.sort_by(f64::total_cmp);
    out
}

/// Rank of each entry in ascending order. Entries within `tol` of their
/// neighbour form one cluster, ranked inside by `growth` and then position.
fn ranks(v: &[f64], growth: &[f64], tol: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] - v[idx[end - 1]] <= tol {
            end += 1;
        }
        idx[start..end].sort_by(|&a, &b| growth[a].total_cmp(&growth[b]).then(a.cmp(&b)));
        start = end;
    }
    let mut out = vec![0; v.len()];
    for (r, i) in idx.into_iter().enumerate() {
        out[i] = r;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstabilityRow {
    pub epsilon: f64,
    pub epsilon_used: f64,
    pub clamped: bool,
    pub shifts: Vec<f64>,
    pub perturbed_spectrum: Vec<f64>,
    pub distance: f64,
    pub sup_deviation: f64,
    pub certified_bound: f64,
    pub closed_form_residual: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstabilityReport {
    pub horizon: usize,
    pub reference_spectrum: Vec<f64>,
    pub fss_exponents: Vec<f64>,
    pub alpha: f64,
    pub constants: SynthesisConstants,
    pub witness: Vec<f64>,
    pub rows: Vec<InstabilityRow>,
    pub warnings: Vec<String>,
}

fn reference_spectrum(
    seq: &dyn MatrixSequence,
    fss: &FssRecord,
    opts: &ExperimentOptions,
) -> Result<Vec<f64>, SynthError> {
    match &opts.reference_spectrum {
        Some(r) if r.len() == fss.dim() => Ok(sorted(r)),
        Some(r) => Err(SynthError::InvalidInput(format!(
            "reference spectrum has {} entries, system dimension is {}",
            r.len(),
            fss.dim()
        ))),
        None => {
            let h = opts.spectrum_horizon.unwrap_or(fss.horizon());
            Ok(spectrum_estimate(seq, h, &opts.scan.rule)?.exponents)
        }
    }
}

/// For each `epsilon`, perturbs the FSS members by distinct shifts of size
/// at most `min(epsilon, delta)` and measures how far the perturbed spectrum
/// lands from the reference one. A row succeeds when that distance is at
/// least `alpha = |mu - lambda(A)| / 2`, where `mu` is the sorted vector of
/// member exponents, while `|R - I|` stays within `beta epsilon`.
pub fn instability_experiment(
    seq: Arc<dyn MatrixSequence>,
    fss: &FssRecord,
    epsilon_grid: &[f64],
    opts: &ExperimentOptions,
) -> Result<InstabilityReport, SynthError> {
    let s = fss.dim();
    let horizon = fss.horizon();
    let report = splitness_report(fss, &opts.scan, horizon)?;
    let constants = SynthesisConstants::from_report(&report, opts.r)?;
    let normality = incompressibility_test(seq.as_ref(), fss, opts.trials, opts.seed, &opts.scan.rule)?;
    let witness = match (normality.verdict, normality.witness) {
        (NormalityVerdict::NotNormal, Some(w)) => w.coefficients,
        _ => {
            return Err(SynthError::Precondition(format!(
                "FSS is normal up to horizon {horizon}; instability needs a non-normal splitted FSS"
            )))
        }
    };
    let lambda = reference_spectrum(seq.as_ref(), fss, opts)?;
    let members: Vec<f64> = member_exponents(fss, &opts.scan.rule)?.iter().map(|e| e.value).collect();
    let alpha = linf(&sorted(&members), &lambda) / 2.0;
    // Near-equal members: the faster-growing one gets the larger shift, so the
    // perturbed simulation does not amplify rounding along slower members.
    let growth: Vec<f64> = fss.trajectories().iter().map(|t| t.log_norms().iter().sum()).collect();
    let rank = ranks(&members, &growth, GROUP_TOL);
    let mut warnings = report.warnings.clone();
    let mut rows = Vec::with_capacity(epsilon_grid.len());
    for &epsilon in epsilon_grid {
        if !(epsilon > 0.0) {
            return Err(SynthError::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
        }
        let clamped = epsilon > constants.delta;
        let used = epsilon.min(constants.delta);
        if clamped {
            warnings.push(format!("epsilon = {epsilon} exceeds delta = {}; shifts clamped", constants.delta));
        }
        let shifts: Vec<f64> = rank
            .iter()
            .map(|&r| {
                let t = if s == 1 { 0.0 } else { 2.0 * r as f64 / (s - 1) as f64 - 1.0 };
                used * 0.9 * t
            })
            .collect();
        let plan = build_plan(fss, &shifts, &constants, horizon, &opts.scan.rule)?;
        let out = execute_plan(seq.clone(), fss, &plan)?;
        let perturbed = sorted(&out.perturbed_exponents);
        let distance = linf(&perturbed, &lambda);
        let bound = constants.beta * used;
        rows.push(InstabilityRow {
            epsilon,
            epsilon_used: used,
            clamped,
            shifts,
            distance,
            sup_deviation: out.norm.sup_deviation,
            certified_bound: bound,
            closed_form_residual: out.closed_form_residual,
            success: distance >= alpha && out.norm.sup_deviation <= bound && out.closed_form_ok,
            perturbed_spectrum: perturbed,
        });
    }
    Ok(InstabilityReport {
        horizon,
        reference_spectrum: lambda,
        fss_exponents: members,
        alpha,
        constants,
        witness,
        rows,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpennessReport {
    pub horizon: usize,
    pub spectrum: Vec<f64>,
    pub target: Vec<f64>,
    pub epsilon: f64,
    /// Radius of the admissible neighbourhood `min(gap / 3, epsilon / beta, delta)`.
    pub radius: f64,
    pub constants: SynthesisConstants,
    pub shifts: Vec<f64>,
    pub assigned: Vec<f64>,
    pub sup_deviation: f64,
    pub closed_form_residual: f64,
    pub max_assignment_error: f64,
    pub distinct: bool,
    pub success: bool,
}

/// Assigns the sorted target spectrum `mu` to a system with a simple
/// spectrum through its normal splitted FSS.
pub fn openness_experiment(
    seq: Arc<dyn MatrixSequence>,
    fss: &FssRecord,
    target: &[f64],
    epsilon: f64,
    opts: &ExperimentOptions,
) -> Result<OpennessReport, SynthError> {
    let s = fss.dim();
    let horizon = fss.horizon();
    if target.len() != s {
        return Err(SynthError::InvalidInput(format!("target has {} entries, system dimension is {s}", target.len())));
    }
    if !(epsilon > 0.0) {
        return Err(SynthError::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let report = splitness_report(fss, &opts.scan, horizon)?;
    let constants = SynthesisConstants::from_report(&report, opts.r)?;
    let normality = incompressibility_test(seq.as_ref(), fss, opts.trials, opts.seed, &opts.scan.rule)?;
    if normality.verdict != NormalityVerdict::NormalUpToHorizon {
        return Err(SynthError::Precondition("FSS is not normal; assignment needs a normal splitted FSS".into()));
    }
    let members: Vec<f64> = member_exponents(fss, &opts.scan.rule)?.iter().map(|e| e.value).collect();
    let spectrum = sorted(&members);
    let gap = spectrum.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if gap < GROUP_TOL {
        return Err(SynthError::Precondition(format!("spectrum {spectrum:?} is not simple (gap {gap})")));
    }
    let target_sorted = sorted(target);
    let radius = (gap / 3.0).min(epsilon / constants.beta).min(constants.delta);
    let dist = linf(&target_sorted, &spectrum);
    if !(dist < radius) {
        return Err(SynthError::Precondition(format!(
            "target is at distance {dist} from the spectrum; the admissible radius is {radius}"
        )));
    }
    let rank = ranks(&members, &members, 0.0);
    let shifts: Vec<f64> = members.iter().zip(&rank).map(|(m, &r)| target_sorted[r] - m).collect();
    let plan = build_plan(fss, &shifts, &constants, horizon, &opts.scan.rule)?;
    let out = execute_plan(seq, fss, &plan)?;
    let assigned = sorted(&out.perturbed_exponents);
    let max_assignment_error = linf(&assigned, &target_sorted);
    let distinct = assigned.windows(2).all(|w| w[1] > w[0]);
    let success = out.norm.sup_deviation < epsilon
        && distinct
        && max_assignment_error <= opts.assign_tol
        && out.closed_form_ok;
    Ok(OpennessReport {
        horizon,
        spectrum,
        target: target_sorted,
        epsilon,
        radius,
        constants,
        shifts,
        assigned,
        sup_deviation: out.norm.sup_deviation,
        closed_form_residual: out.closed_form_residual,
        max_assignment_error,
        distinct,
        success,
    })
}
