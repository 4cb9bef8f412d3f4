use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Each variant corresponds to a distinct failure class so that callers (the
/// CLI in particular) can map them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or input data (bad density table, bad grid, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A Monte Carlo run failed its stationarity or consistency checks.
    #[error("convergence error: {0}")]
    Convergence(String),

    /// A size or resource cap was exceeded.
    #[error("size limit exceeded: {0}")]
    Size(String),

    /// Random sampling failed (e.g. graph pairing retries exhausted).
    #[error("sampling error: {0}")]
    Sampling(String),

    /// An internal invariant was violated; indicates a bug or numerical blow-up.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
