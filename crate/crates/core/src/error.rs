use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is orientation reversing (det = {det})")]
    NonOrientable { det: f64 },
    #[error("matrix is singular or too far from SO(3): {0}")]
    NearSingular(String),
    #[error("vector is not a unit vector (norm = {norm})")]
    NotUnit { norm: f64 },
    #[error("vanishing denominator: {0}")]
    VanishingDenominator(&'static str),
    #[error("point is off the level set (residual = {residual:e})")]
    OffLevel { residual: f64 },
    #[error("ambiguous square-root branch: {0}")]
    Ambiguous(&'static str),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unresolved sheet ambiguity: {0}")]
    SheetAmbiguity(String),
    #[error("step limit reached at t = {t} after {steps} steps")]
    StepLimit { t: f64, steps: usize },
    #[error("non-finite derivative at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
