use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("disconnected topology: n={n}, p={p} after {attempts} attempts")]
    DisconnectedTopology { n: usize, p: f64, attempts: usize },

    #[error("graph is not connected")]
    Disconnected,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("point is infeasible: norm {norm} exceeds radius {radius}")]
    Infeasible { norm: f64, radius: f64 },

    #[error("interior distance unavailable (delta must be positive)")]
    InteriorDistanceUnavailable,

    #[error("singular value decomposition failed")]
    SvdFailure,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("too few usable points for a rate fit: {found} < {required}")]
    InsufficientData { found: usize, required: usize },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(self, iteration: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }
}
