pub mod chains;
pub mod error;
pub mod hamiltonians;
pub mod models;
pub mod par;
pub mod sampling;
pub mod shift;
pub mod tensor;
pub mod verifier;

pub use error::{Error, Result};
pub use models::{Boundary, ChiMode, Flavor, ModelConfig, ModelSpec};
pub use par::Execution;
pub use shift::{diffop_residual, DifferenceOperator, DynamicalMatrix, LambdaOp, ShiftMode, Terms};
pub use tensor::{commutator_norm, DenseOperator, Leg, WeightBasis, C64};
pub use verifier::{VerificationReport, VerifyOptions};
