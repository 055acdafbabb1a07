use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |M - M^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("empty operator list")]
    EmptyTensor,

    #[error("site {site} out of range for {n} spins")]
    SiteOutOfRange { site: usize, n: usize },

    #[error("{n} spins exceeds the configured maximum of {max}")]
    TooManySpins { n: usize, max: usize },

    #[error("parity blocks leak: off-block element {leak:e} exceeds tolerance")]
    ParityLeakage { leak: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid basis label {0:?}")]
    InvalidLabel(String),

    #[error("integration failed at t = {t:e} s: {reason}")]
    Integration { t: f64, reason: String },

    #[error("Fock truncation invalid: population {population:e} at n_max = {n_max}")]
    Truncation { population: f64, n_max: usize },

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
