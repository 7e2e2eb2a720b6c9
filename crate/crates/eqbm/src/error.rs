use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix dimension {0} outside the supported range 1..=1024")]
    Dimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian: max |A - A^dagger| = {0:e}")]
    NotHermitian(f64),

    #[error("matrix is not unitary: max |U U^dagger - I| = {0:e}")]
    NotUnitary(f64),

    #[error("{what}: expected length {expected}, found {found}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid Pauli string {0:?}")]
    Pauli(String),

    #[error("POVM effect {label:?} is not positive semidefinite (min eigenvalue {min_eig:e})")]
    PovmNotPositive { label: String, min_eig: f64 },

    #[error("POVM effects do not sum to identity (max deviation {deviation:e}, worst outcome {label:?})")]
    PovmIncomplete { label: String, deviation: f64 },

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("{what} index {index} out of range (length {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("unknown outcome label {0:?}")]
    UnknownOutcome(String),

    #[error("shot plan has {given} shots but the bound requires at least {required}")]
    ShotPlan { required: u64, given: u64 },

    #[error("tent density is singular at t = 0")]
    TentSingularity,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("linear solve ill-conditioned: condition estimate {condition:e} at shift {shift:e}")]
    IllConditioned { condition: f64, shift: f64 },

    #[error("iterate diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}
