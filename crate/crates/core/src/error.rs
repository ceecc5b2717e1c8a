use alloc::boxed::Box;

use crate::linalg::Matrix;

pub type Result<T> = core::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input: wrong shapes, non-finite values, invalid configuration.
    Input,
    /// Well-formed input outside the domain where the mean is defined.
    Precondition,
    /// An iterative scheme stopped before reaching its tolerance.
    Convergence,
    /// A dense kernel failed.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (eigenvalues in [{min:e}, {max:e}])")]
    NotPositiveDefinite { min: f64, max: f64 },
    #[error("matrix is not positive semi-definite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },
    #[error("matrix has numerical rank below {rank} (eigenvalue {eigenvalue:e})")]
    RankDeficient { rank: usize, eigenvalue: f64 },
    #[error("columns are not orthonormal (residual {residual:e})")]
    NotOrthonormal { residual: f64 },
    #[error("argument out of domain: {0}")]
    Domain(&'static str),
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {required} inputs, got {found}")]
    TooFewInputs { required: usize, found: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("dense decomposition failed to converge")]
    NumericalFailure,
    #[error("dominant subspace is ambiguous (eigengap {gap:e} below {threshold:e})")]
    AmbiguousSubspace { gap: f64, threshold: f64 },
    #[error("principal angle {angle} is at the cut locus")]
    AlignmentSingular { angle: f64 },
    #[error("subspace at distance {distance} lies outside the ball of radius {radius}")]
    OutOfBall { distance: f64, radius: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Option<Box<Matrix>>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DimensionMismatch { .. }
            | Error::NonFinite
            | Error::NotSymmetric { .. }
            | Error::NotOrthonormal { .. }
            | Error::EmptyInput
            | Error::TooFewInputs { .. }
            | Error::InvalidWeights(_)
            | Error::InvalidConfig(_) => ErrorKind::Input,
            Error::NotPositiveDefinite { .. }
            | Error::NotPsd { .. }
            | Error::RankDeficient { .. }
            | Error::Domain(_)
            | Error::AmbiguousSubspace { .. }
            | Error::AlignmentSingular { .. }
            | Error::OutOfBall { .. } => ErrorKind::Precondition,
            Error::NoConvergence { .. } => ErrorKind::Convergence,
            Error::NumericalFailure => ErrorKind::Numerical,
        }
    }

    /// Short machine-readable tag, stable across releases.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::NonFinite => "non-finite",
            Error::NotSymmetric { .. } => "not-symmetric",
            Error::NotPositiveDefinite { .. } => "not-positive-definite",
            Error::NotPsd { .. } => "not-psd",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::NotOrthonormal { .. } => "not-orthonormal",
            Error::Domain(_) => "domain",
            Error::EmptyInput => "empty-input",
            Error::TooFewInputs { .. } => "too-few-inputs",
            Error::InvalidWeights(_) => "invalid-weights",
            Error::InvalidConfig(_) => "invalid-config",
            Error::NumericalFailure => "numerical-failure",
            Error::AmbiguousSubspace { .. } => "ambiguous-subspace",
            Error::AlignmentSingular { .. } => "cut-locus",
            Error::OutOfBall { .. } => "out-of-ball",
            Error::NoConvergence { .. } => "no-convergence",
        }
    }
}
