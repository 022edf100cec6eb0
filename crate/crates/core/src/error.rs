use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("transition row (state {state}, action {action}) is not stochastic: sum = {sum}")]
    RowNotStochastic { state: usize, action: usize, sum: f64 },

    #[error("policy row for state {state} is not a distribution: sum = {sum}")]
    PolicyNotStochastic { state: usize, sum: f64 },

    #[error("discount {0} is outside [0, 1)")]
    GammaOutOfRange(f64),

    #[error("non-finite reward at (state {state}, action {action})")]
    NonFiniteReward { state: usize, action: usize },

    #[error("grid has no floor cells")]
    EmptyGrid,

    #[error("invalid grid layout: {0}")]
    GridLayout(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("value iteration produced a non-finite value")]
    NonFiniteValue,

    #[error("{count} deterministic policies exceed the enumeration cap {cap}")]
    EnumerationTooLarge { count: String, cap: u64 },

    #[error("marginals carry different mass: {p} vs {q}")]
    MassMismatch { p: f64, q: f64 },

    #[error("empty point set")]
    EmptySet,

    #[error("transport solver exceeded its pivot limit")]
    PivotLimit,

    #[error("k = {k} is outside [1, {n}]")]
    KOutOfRange { k: usize, n: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("experiment failed at mdp {mdp}{}: {source}", run.map(|r| format!(", run {r}")).unwrap_or_default())]
    Experiment {
        mdp: usize,
        run: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by malformed input rather than a failure while computing.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Experiment { source, .. } => source.is_validation(),
            Error::NonFiniteValue | Error::PivotLimit | Error::Io(_) => false,
            _ => true,
        }
    }
}
