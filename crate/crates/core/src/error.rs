use thiserror::Error;

/// Errors raised across synthesis, runtime activation and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("deadline infeasible: deadline {delta_t} s is shorter than period {h} s")]
    DeadlineInfeasible { delta_t: f64, h: f64 },

    #[error("synthesis infeasible at h = {h} s, alpha = {alpha}: {detail}")]
    Infeasible { h: f64, alpha: f64, detail: String },

    #[error("solver failure (max residual {residual:e}): {detail}")]
    Solver { residual: f64, detail: String },

    #[error("Riccati iteration did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("schedulability error: wcet {wcet} s is not below period {h} s")]
    Schedulability { wcet: f64, h: f64 },

    #[error("barrier domain error: state lies on or outside the safe region (min slack {slack:e})")]
    BarrierDomain { slack: f64 },

    #[error("unrecoverable state at t = {t} s: outside the preferred region and every safe invariant region")]
    Unrecoverable { t: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable kind, used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Domain(_) => "domain",
            Error::Numeric(_) => "numeric",
            Error::Geometry(_) => "geometry",
            Error::DeadlineInfeasible { .. } => "deadline-infeasible",
            Error::Infeasible { .. } => "infeasible",
            Error::Solver { .. } => "solver",
            Error::NonConvergence { .. } => "non-convergence",
            Error::Schedulability { .. } => "schedulability",
            Error::BarrierDomain { .. } => "barrier-domain",
            Error::Unrecoverable { .. } => "unrecoverable",
            Error::Precondition(_) => "precondition",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
