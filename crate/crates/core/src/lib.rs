//! Lyapunov spectra of discrete linear time-varying systems
//! `x(n+1) = A(n) x(n)`, angle statistics of fundamental solution systems,
//! and synthesis of small multiplicative perturbations `A(n) R(n)` that
//! shift individual exponents by prescribed amounts.
//!
//! Every limit superior is replaced by a finite-horizon tail maximum; see
//! [`tolerances`] for the thresholds involved.

pub mod error;
pub mod expr;
pub mod linalg;
pub mod model;
pub mod sinln;
pub mod tolerances;
pub mod spectrum;
pub mod splitness;
pub mod synth;

pub use error::{Error, ErrorClass};
