//! Error types shared across the crate.
//!
//! Two broad classes matter to callers: configuration problems (bad input,
//! rejected before any numerics run) and numerical failures (a computation
//! ran but did not meet its convergence or localization contract). The CLI
//! maps them to distinct exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value; the message names the offending field.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical procedure failed its convergence contract.
    #[error("non-convergence: {0}")]
    NonConvergence(String),

    /// A Wannier orbital did not decay below tolerance within the real-space
    /// window; increase `numerics.real_span`.
    #[error("insufficient real_span: {0}")]
    InsufficientSpan(String),

    /// Trial projection collapsed at some k point; the projection gauge is
    /// undefined there.
    #[error("gauge failure: {0}")]
    GaugeFailure(String),

    /// A Fock sector exceeds the supported in-memory dimension.
    #[error("sector too large: {0}")]
    SectorTooLarge(String),

    /// Requested quantity needs data that was not computed.
    #[error("missing prerequisite: {0}")]
    Missing(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that should map to the "numerical non-convergence"
    /// exit code rather than the configuration exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence(_)
                | Error::InsufficientSpan(_)
                | Error::GaugeFailure(_)
                | Error::SectorTooLarge(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
