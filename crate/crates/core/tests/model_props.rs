use lyap_core::linalg::{spectral_norm, Matrix, Vector};
use lyap_core::model::{
    additive_to_multiplicative, lyapunov_bound_estimate, multiplicative_to_additive, propagate, transition,
    CoefficientSequence, MatrixSequence,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn config(cases: u32) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(31), failure_persistence: None, ..Config::default() }
}

/// `len` matrices `c (1.2 I + V / s)` with `|V|_max <= 1`, so every
/// singular value of the bracket lies in `[0.2, 2.2]`.
fn lyapunov_sequence(len: usize) -> impl Strategy<Value = CoefficientSequence> {
    (2usize..=5).prop_flat_map(move |s| {
        (
            proptest::collection::vec(-1.0f64..1.0, s * s * len),
            proptest::collection::vec(0.5f64..2.0, len),
        )
            .prop_map(move |(v, c)| {
                let mats = (0..len)
                    .map(|k| {
                        let m = Matrix::from_column_slice(s, s, &v[k * s * s..(k + 1) * s * s]);
                        (Matrix::identity(s, s) * 1.2 + m / s as f64) * c[k]
                    })
                    .collect();
                CoefficientSequence::tabulated(mats).unwrap()
            })
    })
}

fn scaled_random(s: usize, v: &[f64], size: f64) -> Matrix {
    let m = Matrix::from_column_slice(s, s, &v[..s * s]);
    let n = spectral_norm(&m).unwrap();
    m * (size / n)
}

fn sup_norm(seq: &dyn MatrixSequence, len: usize, shift: f64) -> f64 {
    let s = seq.dim();
    (1..=len)
        .map(|n| spectral_norm(&(seq.at(n).unwrap() - Matrix::identity(s, s) * shift)).unwrap())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(config(500))]

    #[test]
    fn transition_bound(seq in lyapunov_sequence(50), n in 1usize..=50, m in 1usize..=50) {
        let a = lyapunov_bound_estimate(&seq, 50).unwrap();
        let x = transition(&seq, n, m).unwrap();
        let bound = a.ln() * (n as f64 - m as f64).abs();
        prop_assert!(x.log_norm() <= bound + 1e-9, "{} > {bound}", x.log_norm());
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn cocycle(seq in lyapunov_sequence(21), n in 1usize..=21, k in 1usize..=21, m in 1usize..=21) {
        let lhs = transition(&seq, n, k).unwrap().mul(&transition(&seq, k, m).unwrap()).unwrap();
        let rhs = transition(&seq, n, m).unwrap();
        prop_assert!((lhs.log_norm() - rhs.log_norm()).abs() <= 1e-9 * rhs.log_norm().abs().max(1.0));
        prop_assert!((lhs.unit - rhs.unit).amax() < 1e-9);
    }

    #[test]
    fn log_scale_consistency(seq in lyapunov_sequence(300), x in proptest::collection::vec(-1.0f64..1.0, 5)) {
        let s = seq.dim();
        let x0 = Vector::from_column_slice(&x[..s]);
        prop_assume!(x0.norm() > 1e-3);
        let t = propagate(&seq, &x0, 301).unwrap();
        for n in [1usize, 2, 17, 150, 301] {
            let (dir, log) = transition(&seq, n, 1).unwrap().apply(&x0);
            prop_assert!((log - t.log_norm(n)).abs() <= 1e-9 * log.abs().max(1.0));
            prop_assert!((dir - t.direction_vector(n)).amax() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn perturbation_inclusions(
        seq in lyapunov_sequence(10),
        v in proptest::collection::vec(-1.0f64..1.0, 250),
        frac in proptest::collection::vec(0.01f64..0.99, 10),
    ) {
        let s = seq.dim();
        let a = lyapunov_bound_estimate(&seq, 10).unwrap();
        let delta = 0.2 / a;
        let q = CoefficientSequence::tabulated(
            (0..10).map(|k| scaled_random(s, &v[25 * k..], delta * frac[k])).collect(),
        )
        .unwrap();
        prop_assert!(sup_norm(&q, 10, 0.0) < delta);
        let r = additive_to_multiplicative(&seq, &q, 10).unwrap();
        prop_assert!(sup_norm(&r, 10, 1.0) < a * delta);

        let r = CoefficientSequence::tabulated(
            (0..10)
                .map(|k| Matrix::identity(s, s) + scaled_random(s, &v[25 * (9 - k)..], delta * frac[k]))
                .collect(),
        )
        .unwrap();
        let q = multiplicative_to_additive(&seq, &r, 10).unwrap();
        prop_assert!(sup_norm(&q, 10, 0.0) < a * delta);
    }
}
