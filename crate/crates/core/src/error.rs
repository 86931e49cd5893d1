use thiserror::Error;

pub type Result<T> = std::result::Result<T, QnkError>;

#[derive(Debug, Error)]
pub enum QnkError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not unitary (residual {residual:.3e})")]
    NonUnitary { residual: f64 },

    #[error("matrix is not normal (residual {residual:.3e})")]
    NonNormal { residual: f64 },

    #[error("matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("map is not trace-preserving (residual {residual:.3e})")]
    NotTracePreserving { residual: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("group commutator is not constant across the sets (max deviation {deviation:.3e})")]
    NotConstantCommutator { deviation: f64 },

    #[error("index i = {i} is not in I(k) for k = {k}")]
    KeyIndexOutOfSet { k: u64, i: u64 },

    #[error("key k = {k} is outside the key space of size {key_space}")]
    KeyOutOfSpace { k: u64, key_space: u64 },

    #[error("variant {variant} needs {expected} product indices per party, key provides {found}")]
    KeyArity {
        variant: String,
        expected: usize,
        found: usize,
    },

    #[error("probability distribution must sum to 1 (sum = {sum})")]
    InvalidDistribution { sum: f64 },

    #[error("invalid operator family: {invariant} violated ({detail})")]
    InvalidFamily { invariant: String, detail: String },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
