use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("factorization failed: {0}")]
    GaugeFailure(String),

    #[error("Fock basis dimension {dim} exceeds the configured limit {limit}")]
    BasisTooLarge { dim: u128, limit: usize },

    #[error("Krylov propagator did not converge: {0}")]
    KrylovFailure(String),

    #[error("invalid observable: {0}")]
    InvalidObservable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
