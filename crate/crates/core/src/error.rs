use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The vector handed to `normalize` has (numerically) zero norm. For a
    /// jump target this means the channel annihilates the source state.
    #[error("zero-norm state (norm {0:e})")]
    ZeroNorm(f64),

    #[error("sample grid is not uniform (step {index} differs from {expected})")]
    NonUniformGrid { index: usize, expected: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("ensemble closure exceeded the cap of {cap} states; the model is not ensemble-representable at this cap")]
    ClosureCap { cap: usize },

    #[error("registry corruption: candidate matches both state {0} and state {1}")]
    AmbiguousMatch(usize, usize),

    #[error("negative probability {value:e} for state {state} at t = {t}; reduce dt")]
    NegativeProbability { state: usize, value: f64, t: f64 },

    #[error("norm drift {drift:e} of state {state} at t = {t} exceeds 1e-6 without renormalization")]
    NormDrift { state: usize, drift: f64, t: f64 },

    #[error("jump probability {probability} exceeds 1 at t = {t}; reduce dt")]
    JumpProbability { probability: f64, t: f64 },

    #[error("trace drift {drift:e} at t = {t} in dense integration")]
    TraceDrift { drift: f64, t: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for the command-line runner: 1 validation,
    /// 2 numeric failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. }
            | Error::NonUniformGrid { .. }
            | Error::Invalid(_)
            | Error::ClosureCap { .. }
            | Error::AmbiguousMatch(..)
            | Error::Config(_) => 1,
            Error::ZeroNorm(_)
            | Error::NegativeProbability { .. }
            | Error::NormDrift { .. }
            | Error::JumpProbability { .. }
            | Error::TraceDrift { .. } => 2,
            Error::Io { .. } | Error::Csv(_) => 3,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
