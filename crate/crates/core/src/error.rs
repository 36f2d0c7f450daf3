use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse config: {0}")]
    ConfigParse(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no active PA on the {0} waveguide")]
    InactiveMask(&'static str),

    #[error("channel vector {0} has zero norm")]
    ZeroNorm(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("subproblem infeasible")]
    Infeasible,

    #[error("first subproblem infeasible")]
    InfeasibleAtInit,

    #[error("solver did not converge: {0}")]
    NumericalFailure(String),

    #[error("objective decreased by {0:.3e} between iterations")]
    NonMonotoneObjective(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
