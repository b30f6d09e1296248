use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent sizes or malformed data; `field` names the offending input.
    #[error("structural error in `{field}`: {reason}")]
    Structural { field: String, reason: String },

    #[error("usage error: {0}")]
    Usage(String),

    /// A solvability condition on the data does not hold.
    #[error("condition violated ({condition}): {detail}")]
    Condition {
        condition: &'static str,
        detail: String,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("certificate check failed: {0}")]
    Certificate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn structural(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Structural {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by malformed or invalid input data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Structural { .. } | Error::InvalidParameter(_) | Error::Json(_)
        )
    }
}

/// Condition names used in [`Error::Condition`].
pub mod condition {
    pub const TWO_BLOCK_UNIQUENESS: &str = "two-block subproblem uniqueness";
    pub const NBLOCK_QP_UNIQUENESS: &str = "n-block quadratic subproblem uniqueness";
    pub const SUBPROBLEM_SINGULAR: &str = "nonsingular subproblem";
    pub const DIAGONAL_BLOCKS_DEFINITE: &str = "positive definite diagonal blocks";
}
