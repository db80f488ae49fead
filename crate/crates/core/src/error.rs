use thiserror::Error;

/// Errors produced by the selection library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no samples")]
    NoSamples,
    #[error("dimension mismatch: model has {model} weights, sample has {sample} features")]
    DimensionMismatch { model: usize, sample: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown class index {0}")]
    UnknownClass(usize),
    #[error("penalty undefined below d samples (d = {dims}, n = {n})")]
    PenaltyUndefined { dims: usize, n: f64 },
    #[error("zero samples for class {class} at budget {budget}")]
    ZeroSamples { class: usize, budget: f64 },
    #[error("hierarchy not monotone at class {0}")]
    NotMonotone(usize),
    #[error("grid unbounded within probe range ({0} classes)")]
    GridUnbounded(usize),
    #[error("hierarchy is not nested: {0}")]
    NotNested(String),
    #[error("budget too small for grid: class {class} receives no samples at budget {budget}")]
    BudgetTooSmall { class: usize, budget: f64 },
    #[error("budget below exploration floor: {rounds} rounds for {classes} classes")]
    BelowExplorationFloor { rounds: u64, classes: usize },
    #[error("loss {0} is not convex")]
    NonConvexLoss(&'static str),
    #[error("oracle did not converge after {iterations} iterations (best objective {objective})")]
    NotConverged {
        iterations: usize,
        objective: f64,
        best: Vec<f64>,
    },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("missing reference risk for class {0}")]
    MissingReference(usize),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
