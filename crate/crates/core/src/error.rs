use thiserror::Error;

/// Every failure the numerical core can report.
///
/// `kind()` yields a stable dotted identifier used in machine-readable error
/// documents; the variants themselves may grow fields over time.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing configuration field '{0}'")]
    MissingField(String),

    #[error("nonlinearity violates the solver's hypotheses: {0}")]
    Hypothesis(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("kernel build failed at entry ({row}, {col}): {reason}")]
    KernelBuild { row: usize, col: usize, reason: String },

    #[error("range error: {0}")]
    Range(String),

    #[error("projection failed: {0}")]
    ProjectionFailure(String),

    #[error("no convergence after {iterations} iterations (relative gradient {last_gradient:.3e})")]
    NonConvergence {
        iterations: usize,
        last_gradient: f64,
        history: Vec<crate::solver::IterationRecord>,
    },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("unknown {family} '{name}'")]
    UnknownName { family: &'static str, name: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config.invalid",
            Error::MissingField(_) => "config.missing_field",
            Error::Hypothesis(_) => "config.hypothesis_violation",
            Error::Domain(_) => "numeric.domain",
            Error::Shape(_) => "numeric.shape",
            Error::KernelBuild { .. } => "numeric.kernel_build",
            Error::Range(_) => "numeric.range",
            Error::ProjectionFailure(_) => "numeric.projection_failure",
            Error::NonConvergence { .. } => "numeric.non_convergence",
            Error::Verification(_) => "numeric.verification_failed",
            Error::Resource(_) => "resource.limit",
            Error::UnknownName { .. } => "config.unknown_name",
            Error::Io(_) => "io.error",
            Error::Format(_) => "io.format",
        }
    }

    /// Numerical failures (as opposed to bad input) map to exit code 1 in the CLI.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Shape(_)
                | Error::KernelBuild { .. }
                | Error::Range(_)
                | Error::ProjectionFailure(_)
                | Error::NonConvergence { .. }
                | Error::Verification(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
