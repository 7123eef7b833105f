//! Error type shared by every stage of the pipeline.

use thiserror::Error;

/// Failure modes of the toolkit.
///
/// The variants mirror the pipeline exit classes: configuration problems,
/// violated mathematical preconditions (gates), and numerical breakdowns.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvError {
    /// A parameter is missing, out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input value is not usable (non-finite, outside the domain of a formula).
    #[error("invalid input: {0}")]
    Input(String),

    /// A structural hypothesis of the stability theory does not hold.
    #[error("gate `{gate}` failed: {detail}")]
    Gate { gate: String, detail: String },

    /// A point in (E, L) lies outside the support of the steady state.
    #[error("outside support: {0}")]
    OutOfSupport(String),

    /// An integrator, root finder or factorization failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl EvError {
    pub fn gate(gate: &str, detail: impl Into<String>) -> Self {
        EvError::Gate { gate: gate.to_string(), detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, EvError>;
