//! Numerical tolerances and estimator defaults shared across the crate.
//!
//! Every threshold used by the estimators lives here so that reports can
//! echo the exact values a run was made with.

/// A matrix is singular when `sigma_min <= SINGULAR_RATIO * sigma_max`.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Unit-norm tolerance for stored trajectory directions and scaled matrices.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Default fraction of the horizon used by tail-max (finite limsup) rules.
pub const TAIL_FRACTION: f64 = 0.5;

/// Indices with `f(k) >= lambda_hat - REALIZE_TOL` count as realizing.
pub const REALIZE_TOL: f64 = 1e-2;

/// Exponents closer than this are grouped into one multiplicity class.
pub const GROUP_TOL: f64 = 1e-2;

/// Minimum estimated density for a positive broken-away verdict.
pub const RHO_THRESHOLD: f64 = 0.05;

/// Number of geometric angle thresholds `pi/2 * 2^-j`, `j = 0..GAMMA_GRID_LEN`.
pub const GAMMA_GRID_LEN: usize = 8;

/// Default random trials for the incompressibility test.
pub const INCOMPRESSIBILITY_TRIALS: usize = 64;

/// Default `r` in the perturbation synthesis constants.
pub const SYNTH_R: f64 = 0.5;

/// Maximum bisection steps when solving for `mu`.
pub const BISECTION_MAX_ITER: usize = 60;

/// Required accuracy of `Lambda(mu)` at the returned `mu`.
pub const BISECTION_VALUE_TOL: f64 = 1e-6;

/// Relative agreement required between simulated and closed-form perturbed
/// log-norms.
pub const CLOSED_FORM_REL_TOL: f64 = 1e-9;

/// Eigen-relation tolerance `R(n) d_i = exp(s_i(n)) d_i`.
pub const EIGEN_REL_TOL: f64 = 1e-9;

/// Horizons above this use strided checkpoints in the streaming estimator.
pub const DENSE_CHECKPOINT_LIMIT: usize = 100_000;

/// Checkpoint stride for large horizons.
pub const LARGE_HORIZON_STRIDE: usize = 1_000;

/// Default geometric grid of angle thresholds.
pub fn default_gamma_grid() -> Vec<f64> {
    (0..GAMMA_GRID_LEN)
        .map(|j| std::f64::consts::FRAC_PI_2 * 0.5f64.powi(j as i32))
        .collect()
}

/// `a` and `b` agree to relative `tol`, with an absolute floor of `tol` near zero.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
