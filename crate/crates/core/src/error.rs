use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("matrix is not symmetric: max |a_ij - a_ji| = {max_asymmetry:e}")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("dimension {dim} exceeds the dense cap {cap}; use the matrix-free (Lanczos) path")]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("linear map failed the symmetry probe: <Av,w> = {lhs:e}, <v,Aw> = {rhs:e}")]
    SymmetryProbe { lhs: f64, rhs: f64 },

    #[error("smallest eigenvalue {lambda_min:e} is below the floor {floor:e}")]
    BelowFloor { lambda_min: f64, floor: f64 },

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("cannot remove a sample from a single-element tuple")]
    SingletonRemoval,

    #[error("label {value} at index {index} violates the bound |y| <= {bound}")]
    LabelBound { index: usize, value: f64, bound: f64 },

    #[error("invalid data spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite risk at step {step}; step size is likely too large")]
    Divergence { step: usize },

    #[error("oracle solver diverged at restart {restart}, iteration {iteration}")]
    SolverDivergence { restart: usize, iteration: usize },

    #[error("paired trajectories are inconsistent: {0}")]
    MismatchedPairs(String),

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parameters were not stored at step {0}")]
    MissingSnapshot(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical kind (divergence, non-finite values,
    /// rank deficiency) as opposed to bad input or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::Divergence { .. }
                | Error::SolverDivergence { .. }
                | Error::BelowFloor { .. }
                | Error::NoConvergence
        )
    }
}
