use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported representation: {0}")]
    Unsupported(String),
    #[error("integral diverges: {0}")]
    Singularity(String),
    #[error("assumption A violated: {0}")]
    AssumptionViolated(String),
    #[error("stationary law unavailable: {0}")]
    StationarityUnavailable(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("no convergence: {what} (estimate {estimate:e}, error {error:e})")]
    NonConvergence {
        what: String,
        estimate: f64,
        error: f64,
    },
    #[error("truncation failure: {0}")]
    Truncation(String),
    #[error("characteristic function inversion diverged: {0}")]
    InversionDivergence(String),
    #[error("cap too small: truncation bound {bound:e} exceeds {tol:e}")]
    CapTooSmall { bound: f64, tol: f64 },
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Index(_) => "index",
            Error::Config(_) => "config",
            Error::Unsupported(_) => "unsupported",
            Error::Singularity(_) => "singularity",
            Error::AssumptionViolated(_) => "assumption_violated",
            Error::StationarityUnavailable(_) => "stationarity_unavailable",
            Error::Inconclusive(_) => "inconclusive",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Truncation(_) => "truncation",
            Error::InversionDivergence(_) => "inversion_divergence",
            Error::CapTooSmall { .. } => "cap_too_small",
        }
    }

    /// True for failures of a numerical scheme as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Truncation(_)
                | Error::InversionDivergence(_)
                | Error::CapTooSmall { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
