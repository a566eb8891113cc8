use thiserror::Error;

use crate::lattice::MukaiVector;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("radicand mismatch: {0} vs {1}")]
    RadicandMismatch(u64, u64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("division by zero")]
    DivisionByZero,

    #[error("lattice check failed: {0}")]
    Lattice(String),

    #[error("basis error: {0}")]
    Basis(String),

    #[error("search box too small: {0}")]
    BoxTooSmall(String),

    #[error("no spherical class with positive rank and slope {mu} in box {search_box}")]
    NoSphericalClass { mu: String, search_box: String },

    #[error("every spherical class in the box is massless")]
    EmptySupport,

    #[error("degenerate charge: {0}")]
    DegenerateCharge(String),

    #[error("inconsistent masses: residual {0}")]
    InconsistentMasses(String),

    #[error("no exact square root of {0} in the scalar field")]
    NoExactRoot(String),

    #[error("neither conjugate branch lies in the positive component")]
    NoOrientation,

    #[error("no squared mass supplied for {0}")]
    MissingMass(MukaiVector),

    #[error("progression exhausted after {0} terms without a suitable prime")]
    SearchLimitExceeded(u64),

    #[error("config error: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Short machine-readable tag used in CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::RadicandMismatch(..) => "RadicandMismatch",
            Error::Domain(_) => "DomainError",
            Error::Dimension { .. } => "DimensionError",
            Error::DivisionByZero => "DivisionByZero",
            Error::Lattice(_) => "LatticeError",
            Error::Basis(_) => "BasisError",
            Error::BoxTooSmall(_) => "BoxTooSmall",
            Error::NoSphericalClass { .. } => "NoSphericalClass",
            Error::EmptySupport => "EmptySupport",
            Error::DegenerateCharge(_) => "DegenerateCharge",
            Error::InconsistentMasses(_) => "InconsistentMasses",
            Error::NoExactRoot(_) => "NoExactRoot",
            Error::NoOrientation => "NoOrientation",
            Error::MissingMass(_) => "MissingMass",
            Error::SearchLimitExceeded(_) => "SearchLimitExceeded",
            Error::Config(_) => "ConfigError",
            Error::Invariant(_) => "InvariantViolation",
        }
    }

    /// Process exit status: 2 config, 3 mathematical input, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Lattice(_) | Error::Dimension { .. } => 2,
            Error::Invariant(_) => 4,
            _ => 3,
        }
    }
}
