//! Crate-wide error and its coarse classification into exit categories.

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::model::ModelError;
use crate::spectrum::SpectrumError;
use crate::splitness::SplitnessError;
use crate::synth::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed configuration, spec text or input data.
    Config,
    /// A numerical procedure failed or lost accuracy.
    Numerical,
    /// Inputs are well formed but a hypothesis of the requested operation fails.
    Precondition,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Numerical => 3,
            ErrorClass::Precondition => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Splitness(#[from] SplitnessError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

fn linalg_class(e: &LinalgError) -> ErrorClass {
    match e {
        LinalgError::InvalidInput(_) => ErrorClass::Config,
        LinalgError::Singular { .. } => ErrorClass::Numerical,
    }
}

fn model_class(e: &ModelError) -> ErrorClass {
    use ModelError::*;
    match e {
        Spec { .. } | Expr(_) | DimensionMismatch(_) | Io { .. } | ZeroIndex | OutOfRange { .. } => {
            ErrorClass::Config
        }
        NotLyapunov { .. } | Inadmissible { .. } => ErrorClass::Precondition,
        NonFinite { .. } | Propagation { .. } => ErrorClass::Numerical,
        Linalg(l) => linalg_class(l),
    }
}

fn spectrum_class(e: &SpectrumError) -> ErrorClass {
    match e {
        SpectrumError::EmptyWindow { .. } | SpectrumError::InvalidInput(_) => ErrorClass::Config,
        SpectrumError::Collapse { .. } => ErrorClass::Numerical,
        SpectrumError::Model(m) => model_class(m),
    }
}

fn splitness_class(e: &SplitnessError) -> ErrorClass {
    match e {
        SplitnessError::InvalidInput(_) => ErrorClass::Config,
        SplitnessError::Dependent { .. } => ErrorClass::Precondition,
        SplitnessError::SingularTransformation { .. } => ErrorClass::Numerical,
        SplitnessError::Model(m) => model_class(m),
        SplitnessError::Spectrum(s) => spectrum_class(s),
    }
}

fn synth_class(e: &SynthError) -> ErrorClass {
    use SynthError::*;
    match e {
        InvalidInput(_) => ErrorClass::Config,
        OutOfBudget { .. } | Precondition(_) => ErrorClass::Precondition,
        Bracket { .. } | ScheduleBound { .. } | Conditioning { .. } | NormBudget { .. } => ErrorClass::Numerical,
        Model(m) => model_class(m),
        Spectrum(s) => spectrum_class(s),
        Splitness(s) => splitness_class(s),
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Linalg(e) => linalg_class(e),
            Error::Model(e) => model_class(e),
            Error::Spectrum(e) => spectrum_class(e),
            Error::Splitness(e) => splitness_class(e),
            Error::Synth(e) => synth_class(e),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class().exit_code()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_classes() {
        let e: Error = SynthError::Splitness(SplitnessError::Model(ModelError::ZeroIndex)).into();
        assert_eq!(e.exit_code(), 2);
        let e: Error = SynthError::OutOfBudget { index: 0, xi: 1.0, delta: 0.1 }.into();
        assert_eq!(e.exit_code(), 4);
        let e: Error = SpectrumError::Collapse { n: 3 }.into();
        assert_eq!(e.exit_code(), 3);
    }
}
