use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid constellation order {0}: {1}")]
    InvalidOrder(usize, &'static str),

    #[error("cannot normalize an all-zero constellation")]
    ZeroConstellation,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch in {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("labeling is not a bijection: {0}")]
    InvalidLabeling(String),

    #[error("LUT line {line}: {msg}")]
    Lut { line: usize, msg: String },

    #[error("model checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },

    #[error("channel '{0}' provides no adjoint; backpropagation needs a differentiable channel")]
    NoAdjoint(String),

    #[error("simulation band too narrow: signal occupies +/-{needed_hz:.3e} Hz, sampling allows +/-{available_hz:.3e} Hz")]
    Aliasing { needed_hz: f64, available_hz: f64 },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
