use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid indicator matrix: {0}")]
    InvalidStructure(String),

    #[error("invalid cluster distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("edge placement for block ({r},{s}) exceeded {retries} retries; the block is too dense for rejection sampling")]
    DenseBlock { r: usize, s: usize, retries: u64 },

    #[error("zero normalizer while updating {0}")]
    ZeroNormalizer(String),

    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("indicator matrix is not regular (row sums differ); use the bisection path")]
    NotRegular,

    /// The structure has no known trivial fixed point or violates a
    /// closed-form precondition.
    #[error("unsupported structure: {0}")]
    Unsupported(String),

    #[error("transfer matrix has complex leading eigenvalue {re} + {im}i")]
    ComplexEigenvalue { re: f64, im: f64 },

    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,

    #[error("label {label} out of range for q = {q}")]
    LabelOutOfRange { label: usize, q: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("EM aborted after {} iterations: {source}", history.len())]
    EmAborted {
        source: Box<Error>,
        history: Vec<crate::em::EmRecord>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end: 3 for
    /// structures outside the supported analysis, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Unsupported(_) | Error::NotRegular | Error::ComplexEigenvalue { .. } => 3,
            Error::EmAborted { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
