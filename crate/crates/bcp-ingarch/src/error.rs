use thiserror::Error;

/// Errors surfaced by the BCP-INGARCH library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("sampling failed: conditional mean overflowed at z1 = {z1} (mu2 = {mu2}, phi = {phi})")]
    SamplingOverflow { z1: u64, mu2: f64, phi: f64 },

    #[error("nonstationary mean: I - A - B is singular or unstable")]
    NonstationaryMean,

    #[error("optimization did not converge: {reason} (best log-likelihood {best_loglik})")]
    NonConvergence { reason: String, best_loglik: f64 },

    #[error("singular information matrix: smallest eigenvalue {min_eigenvalue}")]
    SingularInformation { min_eigenvalue: f64 },

    #[error("information matrix not positive definite; the likelihood ratio test is recommended instead")]
    InformationNotPd,

    #[error("too many bootstrap replicas failed to converge: {failed} of {total}")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("fits compare different data sets")]
    MixedData,

    #[error("rolling evaluation failed at prefix length {at}: {source}")]
    RollingAborted {
        at: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code convention: 2 for usage/data problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Data(_)
            | Error::InvalidParameter(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::MixedData => 2,
            _ => 3,
        }
    }
}
