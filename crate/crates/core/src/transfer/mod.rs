//! Real rational transfer functions in `z` and small matrices of them.

mod matrix;
mod polynomial;
mod roots;
mod statespace;
mod tf;

use thiserror::Error;

pub use matrix::TransferMatrix;
pub(crate) use polynomial::ComplexPoly;
pub use polynomial::Polynomial;
pub use statespace::StateSpace;
pub use tf::{feedback, LoopFunctions, TransferFunction, CANCELLATION_TOL, MAX_DEGREE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("evaluation at a pole (z = {re} + {im}i)")]
    PoleEvaluation { re: f64, im: f64 },
    #[error("transfer function is improper")]
    Improper,
    #[error("1 + P·C vanishes identically")]
    SingularLoop,
    #[error("degree {0} exceeds the supported maximum")]
    DegreeLimit(usize),
    #[error("denominator is the zero polynomial")]
    ZeroDenominator,
    #[error("singular transfer function or matrix")]
    Singular,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
