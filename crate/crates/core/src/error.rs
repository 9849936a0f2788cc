use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("probability {0} outside (0,1)")]
    ProbabilityOutOfRange(f64),

    #[error("supercritical dominating walk; sub-sample first (gap d = {0})")]
    Supercritical(f64),

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error(
        "incompatible minorization: beta*survival(nu) exceeds survival(V) at t = {t} by {excess:e}"
    )]
    IncompatibleMinorization { t: f64, excess: f64 },

    #[error("minorization exhausts the law")]
    MinorizationExhausts,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domination violated at time {time}: lambda {lambda} > dominating value {y}")]
    DominationViolated { time: i64, lambda: f64, y: f64 },

    #[error("backward search exceeded depth cap of {0} steps")]
    DepthCapExceeded(u64),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("minorization fails at row {row}, column {col}: {entry} < {bound}")]
    MinorizationViolation {
        row: usize,
        col: usize,
        entry: f64,
        bound: f64,
    },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
