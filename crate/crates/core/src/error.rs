use thiserror::Error;

/// Errors raised anywhere in the mixture-law pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("degenerate mixture term: {0}")]
    DegenerateMixtureTerm(String),

    #[error("mixture gradient is singular on the simplex boundary: {0}")]
    BoundaryGradient(String),

    #[error("no records for target `{0}`")]
    EmptyDataset(String),

    #[error("too few records: {have} available, {need} required")]
    InsufficientData { have: usize, need: usize },

    #[error("every restart produced a non-finite objective")]
    FitFailed,

    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("mirror descent diverged: {0}")]
    OptimizationDiverged(String),

    #[error("infeasible grid: {0}")]
    InfeasibleGrid(String),

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("schema error: {0}")]
    SchemaError(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable variant name, used by the CLI when reporting failures.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidMixture(_) => "InvalidMixture",
            Error::DomainMismatch(_) => "DomainMismatch",
            Error::DegenerateMixtureTerm(_) => "DegenerateMixtureTerm",
            Error::BoundaryGradient(_) => "BoundaryGradient",
            Error::EmptyDataset(_) => "EmptyDataset",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::FitFailed => "FitFailed",
            Error::NonFiniteObjective => "NonFiniteObjective",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidObservation(_) => "InvalidObservation",
            Error::OptimizationDiverged(_) => "OptimizationDiverged",
            Error::InfeasibleGrid(_) => "InfeasibleGrid",
            Error::InfeasibleSplit(_) => "InfeasibleSplit",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::ParseError { .. } => "ParseError",
            Error::SchemaError(_) => "SchemaError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
