use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("no ensemble member survives duplicate filtering around the reference point")]
    DegenerateEnsemble,

    #[error("non-finite potential value at ensemble member {index}")]
    NonFiniteValue { index: usize },

    #[error("whitening matrix has a zero diagonal entry at row {row}")]
    SingularWhitening { row: usize },

    #[error("innovation matrix Gamma + A Sigma A^T is numerically singular")]
    SingularInnovation,

    #[error("matrix `{0}` is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("non-finite state produced by the update of member {member}")]
    NonFiniteState { member: usize },

    #[error("reference index {index} out of range for an ensemble of size {len}")]
    ReferenceOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown potential `{0}`")]
    UnknownPotential(String),

    #[error("potential `{name}` does not support dimension {dim}")]
    BadDimension { name: String, dim: usize },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
