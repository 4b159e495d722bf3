use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("period matrix is not symmetric: asymmetry {asymmetry:e} exceeds {bound:e}")]
    NotSymmetric { asymmetry: f64, bound: f64 },
    #[error("imaginary part of period matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("tolerance must lie in (0, 1), got {0}")]
    InvalidEps(f64),
    #[error("invalid theta characteristic: {0}")]
    InvalidCharacteristic(String),
    #[error("lattice sum needs about {estimated:.3e} points, budget is {budget:.0e}")]
    ConvergenceBudgetExceeded { estimated: f64, budget: f64 },
    #[error("fewer than 3 branch points ({0})")]
    TooFewPoints(usize),
    #[error("branch points {0} and {1} coincide")]
    DuplicateBranchPoints(usize, usize),
    #[error("quadrature did not reach tolerance {tol:e} (last change {achieved:e} with {nodes} nodes)")]
    QuadratureFailure { tol: f64, achieved: f64, nodes: usize },
    #[error("homology basis construction failed: {0}")]
    HomologyConstructionFailure(String),
    #[error("invalid point configuration: {0}")]
    ConfigInvalid(String),
    #[error("minor size {k} exceeds row count {rows}: the determinantal locus is the whole torus")]
    KTooLarge { k: usize, rows: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("all Kummer coordinates vanish")]
    AllCoordinatesVanish,
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("theta evaluation budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable identifier used in diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSquare { .. } => "NotSquare",
            Error::NonFinite(_) => "NonFinite",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::NotPositiveDefinite => "NotPositiveDefinite",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidEps(_) => "InvalidEps",
            Error::InvalidCharacteristic(_) => "InvalidCharacteristic",
            Error::ConvergenceBudgetExceeded { .. } => "ConvergenceBudgetExceeded",
            Error::TooFewPoints(_) => "TooFewPoints",
            Error::DuplicateBranchPoints(..) => "DuplicateBranchPoints",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::HomologyConstructionFailure(_) => "HomologyConstructionFailure",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::AllCoordinatesVanish => "AllCoordinatesVanish",
            Error::OutOfRange(_) => "OutOfRange",
            Error::BudgetExceeded { .. } => "BudgetExceeded",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }

    /// Failures of the numerics themselves, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvergenceBudgetExceeded { .. }
                | Error::QuadratureFailure { .. }
                | Error::HomologyConstructionFailure(_)
                | Error::AllCoordinatesVanish
                | Error::BudgetExceeded { .. }
        )
    }
}
