use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density is undefined for the discrete law `{0}`; use the mass accessor")]
    DiscreteLaw(String),

    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),

    #[error("kernel `{name}` takes {expected} arguments, got {got}")]
    ArityMismatch { name: String, expected: usize, got: usize },

    #[error("degenerate kernel `{0}`: projection variance is below 1e-12")]
    DegenerateKernel(String),

    #[error("required moment is infinite: {0}")]
    InfiniteMoment(String),

    #[error("sample of size {n} is too small for degree {m}")]
    SampleTooSmall { n: usize, m: usize },

    #[error("enumeration of {needed} subsets exceeds the cap of {cap}")]
    TooLarge { needed: u128, cap: u128 },

    #[error("Monte Carlo budget exceeded: {needed} kernel evaluations > cap {cap}")]
    BudgetExceeded { needed: u128, cap: u128 },

    #[error("jackknife standard deviation is numerically zero")]
    ZeroVariance,

    #[error("value {0} is outside the range of the T* map")]
    OutOfRange(f64),

    #[error("importance weights are degenerate (effective sample size {0:.2} < 10)")]
    DegenerateWeights(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
