use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Every particle weight was zero at some step (uniform kernel with too
    /// small a bandwidth).
    #[error("degenerate weights at step {step}: all {n} log-weights are -inf")]
    DegenerateWeights { step: usize, n: usize },

    #[error(
        "truncated NIG rejection budget exhausted after {attempts} attempts \
         (mu = [{mu_tau}, {mu_phi}], sigma2 = {sigma2})"
    )]
    TruncationFailure {
        attempts: usize,
        mu_tau: f64,
        mu_phi: f64,
        sigma2: f64,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("too many failed replicates: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::DegenerateWeights { .. } => "degenerate_weights",
            Error::TruncationFailure { .. } => "truncation_failure",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::TooManyFailures { .. } => "too_many_failures",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
