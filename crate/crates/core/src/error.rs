use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Covariance matrix could not be factored even after adding jitter.
    #[error("covariance matrix is ill-conditioned; Cholesky failed at jitter levels {jitters:?}")]
    IllConditioned { jitters: Vec<f64> },

    /// Every optimizer restart failed.
    #[error("fit failed: {}", .diagnostics.join("; "))]
    FitFailed { diagnostics: Vec<String> },

    /// Least-squares design matrix lacks full column rank.
    #[error("singular design: collinear columns {}", .columns.join(", "))]
    SingularDesign { columns: Vec<String> },

    #[error("Hill model evaluation failed: {0}")]
    HillEvaluation(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
