use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive at-risk population for country {country}, period {period}")]
    NonPositiveAtRisk { country: String, period: i32 },

    #[error("zero total population for country {country}, period {period}")]
    ZeroPopulation { country: String, period: i32 },

    #[error("at-risk population is zero")]
    ZeroAtRisk,

    #[error("empty world at period {period}")]
    EmptyWorld { period: i32 },

    #[error("grid mismatch: expected {expected} age groups, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("non-positive MASI value {value}")]
    NonPositiveMasi { value: f64 },

    #[error("oracle undefined: no out-migration at any occupied age")]
    ZeroOracleDenominator,

    #[error("insufficient history for {country}: need {needed} periods, have {have}")]
    InsufficientHistory { country: String, needed: usize, have: usize },

    #[error("mixed-effects fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("missing vital rates for country {country}, period {period}")]
    MissingVitals { country: String, period: i32 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid axis: {0}")]
    InvalidAxis(String),

    #[error("trajectory {trajectory}, country {country}, period {period}: {source}")]
    Trajectory {
        trajectory: usize,
        country: String,
        period: i32,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of a numerical procedure rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::ZeroOracleDenominator => true,
            Error::Trajectory { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
