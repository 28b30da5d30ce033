use thiserror::Error;

use crate::tensor::Leg;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("unknown leg {0}")]
    UnknownLeg(Leg),
    #[error("duplicate leg {0}")]
    DuplicateLeg(Leg),
    #[error("leg sets overlap at leg {0}")]
    OverlappingLegs(Leg),
    #[error("operator has legs {found:?}, expected {expected:?}")]
    LegMismatch { expected: Vec<Leg>, found: Vec<Leg> },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("permutation needs two distinct legs, got {0} twice")]
    SameLeg(Leg),
    #[error("singular matrix (condition estimate {cond:.3e})")]
    Singular { cond: f64 },
    #[error("singular evaluation point: {0}")]
    SingularPoint(String),
    #[error("difference operators disagree on {0}")]
    Incompatible(String),
    #[error("finite differences did not converge: successive estimates differ by {diff:.3e}")]
    Nonconvergence { diff: f64 },
    #[error("non-diagonal chi cannot be absorbed by the dynamical redefinition")]
    NonDiagonalChi,
    #[error("operator has a nonzero shift part; its spectrum is not defined")]
    ShiftPart,
    #[error("guard exceeded: {0}")]
    Guard(String),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
