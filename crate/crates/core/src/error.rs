//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Problem data failed validation; the message names the offending row or field.
    #[error("invalid problem: {0}")]
    Validation(String),

    /// An enumeration was refused because it would exceed its configured budget.
    #[error("budget exceeded for {what}: required {required}, budget {budget}")]
    BudgetExceeded {
        what: String,
        required: u128,
        budget: u128,
    },

    /// A decision rule left a supported state without an action.
    #[error("no action assigned for supported state `{state}` at stage {stage}")]
    MissingAction { stage: usize, state: String },

    /// Policy length does not match the problem horizon.
    #[error("policy defines {got} stage rules but the horizon is {expected}")]
    PolicyLength { expected: usize, got: usize },

    /// A precondition on an argument was violated (bad index, empty input, ...).
    #[error("{0}")]
    InvalidArgument(String),

    /// The state-space penalty recursion only applies to affine penalties: the
    /// hard 0/infinity penalty does not commute with the expectation over
    /// successor states, so no cost-to-go on the state alone exists for it.
    /// Use the augmented solver instead.
    #[error(
        "affine penalty required: the 0/infinity penalty does not commute with the \
         expectation over successor states; use the augmented solver"
    )]
    ExactPenaltyUnsupported,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI on stderr.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::BudgetExceeded { .. } => "budget",
            Error::MissingAction { .. } => "missing-action",
            Error::PolicyLength { .. } => "policy-length",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::ExactPenaltyUnsupported => "penalty-kind",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
