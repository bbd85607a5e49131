use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("ambiguous classification: |trace| = {0} is within tolerance of 2")]
    AmbiguousClassification(f64),
    #[error("invalid group configuration: {0}")]
    InvalidConfig(String),
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    #[error("critical exponent estimation failed: {0}")]
    EstimationFailure(String),
    #[error("reduction limit: no fundamental-domain representative within {0} steps")]
    ReductionLimit(usize),
    #[error("not a closed geodesic: {0}")]
    NotAClosedGeodesic(String),
    #[error("invalid invariant-set spec: {0}")]
    InvalidSpec(String),
    #[error("quadrature resolution: {0} samples, at least 4 required")]
    QuadratureResolution(usize),
    #[error("stale orbit table: {0}")]
    StaleTable(String),
    #[error("pressure root not bracketed: {0}")]
    Bracket(String),
    #[error("degenerate Gibbs weights: {0}")]
    DegenerateWeights(String),
    #[error("escaping family: {0}")]
    Family(String),
    #[error("bisection failure: {0}")]
    Bisection(String),
    #[error("schedule failure: {0}")]
    Schedule(String),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("configuration errors:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }
}
