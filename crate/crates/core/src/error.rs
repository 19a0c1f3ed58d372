use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RmfError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} = {value} is outside the supported range [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("local normalizer diverges at p = {p}")]
    DivergingNormalizer { p: u64 },

    #[error("non-finite partial Euler product at p = {p}")]
    NumericOverflow { p: u64 },

    #[error("delay-equation solver produced a non-positive value at t = {t}")]
    SolverInstability { t: f64 },

    #[error("refused: {0}")]
    Refused(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("cancelled after {completed} of {requested} realizations")]
    Cancelled { completed: usize, requested: usize },
}

impl RmfError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }

    /// Validation problems map to exit code 2, numeric failures to 3.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Self::InvalidArgument(_) | Self::OutOfRange { .. } | Self::Refused(_) | Self::Parse { .. }
        )
    }
}

pub type Result<T, E = RmfError> = std::result::Result<T, E>;
