use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("machine index {machine} out of range 1..={machines}")]
    MachineOutOfRange { machine: usize, machines: usize },

    #[error("expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("variable index {index} out of range for {len} variables")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("variable {0} assigned conflicting values")]
    ConflictingAssignment(usize),

    #[error("unknown variable {0}")]
    UnknownVariable(String),

    #[error("{qubits} variables exceed the enumeration limit of {limit}; fix more variables first")]
    TooManyVariables { qubits: usize, limit: usize },

    #[error("degenerate spectrum: E_min = E_max = {0}")]
    DegenerateSpectrum(f64),

    #[error("expected {expected} parameters, got {actual}")]
    ParameterCount { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("filter requires positive shifted energy, got {0}")]
    NonPositiveEnergy(f64),

    #[error("filtered second moment is zero")]
    ZeroSecondMoment,

    #[error("objective returned non-finite value {value} at evaluation {evaluation}")]
    NonFiniteObjective { value: f64, evaluation: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
