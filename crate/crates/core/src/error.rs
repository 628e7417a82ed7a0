use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate projection: point lies on the principal plane (|s| = {scale:e})")]
    DegenerateProjection { scale: f64 },

    #[error("singular geometry: triangulation condition number {condition:e} exceeds limit")]
    SingularGeometry { condition: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("reference plane is grazing: camera ray within {angle:e} rad of parallel")]
    GrazingPlane { angle: f64 },

    #[error("invalid reference plane: {0}")]
    InvalidReferencePlane(String),

    #[error("degenerate phase shift: delta1 = {delta1}, delta3 = {delta3}")]
    DegeneratePhaseShift { delta1: f64, delta3: f64 },

    #[error("time {time} s outside trajectory domain [{start}, {end}]")]
    OutOfTrajectory { time: f64, start: f64, end: f64 },

    #[error("trajectory domain empty")]
    EmptyTrajectory,

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed input documents rather than I/O.
    pub fn is_parse_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
