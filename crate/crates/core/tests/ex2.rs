//! The `sin ln n` example: a diagonal system whose natural FSS is splitted
//! but not normal.

use std::sync::Arc;

use lyap_core::linalg::Vector;
use lyap_core::model::{parse_generator_spec, MatrixSequence};
use lyap_core::spectrum::{incompressibility_test, member_exponents, spectrum_estimate, NormalityVerdict, TailRule};
use lyap_core::splitness::{splitness_report, FssRecord, ScanOptions, Verdict};
use lyap_core::synth::{
    build_plan, execute_plan, instability_experiment, perturbation_at, ExperimentOptions, SynthesisConstants,
};

const SPEC: &str = r#"
dimension = 2
kind = "diagonal-formula"
entries = [
  "exp(n*sin(ln(n)) - (n+1)*sin(ln(n+1)))",
  "exp(2*((n+1)*sin(ln(n+1)) - n*sin(ln(n))))",
]
"#;

const HORIZON: usize = 10_000;

fn setup() -> (Arc<dyn MatrixSequence>, FssRecord) {
    let seq: Arc<dyn MatrixSequence> = Arc::new(parse_generator_spec(SPEC).unwrap());
    let fss = FssRecord::propagate(
        seq.as_ref(),
        vec![Vector::from_column_slice(&[1.0, 1.0]), Vector::from_column_slice(&[0.0, 1.0])],
        HORIZON,
    )
    .unwrap();
    (seq, fss)
}

fn rule() -> TailRule {
    TailRule::with_tail(0.8)
}

fn scan() -> ScanOptions {
    ScanOptions { rule: rule(), ..ScanOptions::default() }
}

#[test]
fn member_exponents_are_both_two() {
    let (_, fss) = setup();
    let ex = member_exponents(&fss, &rule()).unwrap();
    for e in &ex {
        assert!((e.value - 2.0).abs() < 1e-2, "{}", e.value);
        assert!(e.realizing.indices.contains(&2576));
    }
}

#[test]
fn splitted_with_common_gamma() {
    let (_, fss) = setup();
    let rep = splitness_report(&fss, &scan(), HORIZON).unwrap();
    assert_eq!(rep.splitted, Verdict::Yes);
    for v in &rep.verdicts {
        assert!(v.rho_hat >= 0.19, "{v:?}");
    }
    let c = SynthesisConstants::from_report(&rep, 0.5).unwrap();
    assert!(c.delta > 0.0 && c.beta.is_finite());
}

#[test]
fn not_normal() {
    let (seq, fss) = setup();
    let r = incompressibility_test(seq.as_ref(), &fss, 16, 1, &rule()).unwrap();
    assert_eq!(r.verdict, NormalityVerdict::NotNormal);
    let w = r.witness.unwrap();
    assert_eq!(w.coefficients, vec![1.0, -1.0]);
    assert!(w.combined_exponent <= 1.1);
}

#[test]
fn plan_eigenvalues_on_gamma() {
    let (seq, fss) = setup();
    let rep = splitness_report(&fss, &scan(), HORIZON).unwrap();
    let c = SynthesisConstants::from_report(&rep, 0.5).unwrap();
    // larger shift on the dominant member x1
    let xi = [0.9 * c.delta, -0.9 * c.delta];
    let plan = build_plan(&fss, &xi, &c, HORIZON, &rule()).unwrap();
    let n = (1..=HORIZON).find(|&n| plan.gamma_sets[0][n - 1] && n > 30).unwrap();
    let r = perturbation_at(&plan, &fss, n).unwrap();
    // eigenvalues of a 2x2 from its characteristic polynomial
    let (tr, det) = (r.trace(), r.determinant());
    let disc = (tr * tr - 4.0 * det).sqrt();
    let mut ev = [(tr - disc) / 2.0, (tr + disc) / 2.0];
    ev.sort_by(f64::total_cmp);
    let mut want = [plan.schedule(0, n).exp(), plan.schedule(1, n).exp()];
    want.sort_by(f64::total_cmp);
    for (a, b) in ev.iter().zip(&want) {
        assert!((a - b).abs() < 1e-9, "{ev:?} vs {want:?}");
    }

    let out = execute_plan(seq, &fss, &plan).unwrap();
    assert!(out.closed_form_ok, "{}", out.closed_form_residual);
    assert!(out.norm.sup_deviation <= out.norm.certified_bound);
    for (p, x) in out.perturbed_exponents.iter().zip(&xi) {
        assert!((p - (2.0 + x)).abs() < 5e-2, "{:?}", out.perturbed_exponents);
    }
}

#[test]
fn instability_rows_succeed() {
    let (seq, fss) = setup();
    let opts = ExperimentOptions {
        scan: scan(),
        reference_spectrum: Some(vec![1.0, 2.0]),
        trials: 8,
        ..ExperimentOptions::default()
    };
    let rep = instability_experiment(seq, &fss, &[0.03, 0.01, 0.003], &opts).unwrap();
    assert_eq!(rep.witness, vec![1.0, -1.0]);
    assert!(rep.rows.iter().all(|r| r.success));
    assert!(rep.rows[0].clamped);
}

#[test]
fn spectrum_at_large_horizon() {
    let seq = parse_generator_spec(SPEC).unwrap();
    let est = spectrum_estimate(&seq, 1_500_000, &TailRule::with_tail(0.99)).unwrap();
    assert_eq!(est.checkpoint_stride, 1000);
    for (e, want) in est.exponents.iter().zip([1.0, 2.0]) {
        assert!((e - want).abs() < 5e-2, "{:?}", est.exponents);
    }
}
