use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("skeleton has no joints")]
    EmptySkeleton,
    #[error("bone ({0}, {1}) references a joint outside [0, {2})")]
    BoneOutOfRange(usize, usize, usize),
    #[error("bone ({0}, {0}) is a self-loop")]
    SelfLoop(usize),
    #[error("bone ({0}, {1}) is listed more than once")]
    DuplicateBone(usize, usize),
    #[error("center-of-gravity joint {cog} is outside [0, {joints})")]
    CogOutOfRange { cog: usize, joints: usize },
    #[error("skeleton is disconnected: joint {joint} is unreachable from joint {from}")]
    Disconnected { joint: usize, from: usize },
    #[error("expected {expected} joint names, got {actual}")]
    JointNameCount { expected: usize, actual: usize },
    #[error("topology file line {line}: {message}")]
    TopologyParse { line: usize, message: String },
    #[error("maximum hop distance must be at least 1")]
    InvalidMaxHop,
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("permutation of length {actual} does not cover {expected} joints")]
    InvalidPermutation { expected: usize, actual: usize },
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },
    #[error("temporal kernel size must be odd, got {0}")]
    EvenKernel(usize),
    #[error("stride must be positive")]
    ZeroStride,
    #[error("class index {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("backward requires a scalar loss, node has shape {0}")]
    NonScalarLoss(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn mismatch(op: &'static str, lhs: impl ToString, rhs: impl ToString) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.to_string(),
        rhs: rhs.to_string(),
    }
}
