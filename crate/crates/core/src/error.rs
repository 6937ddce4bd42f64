use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },

    #[error("{op}: {msg}")]
    Contract { op: &'static str, msg: String },

    #[error("spectral plan for {plan:?} cannot transform trailing extents {got:?}")]
    Plan { plan: (usize, usize), got: Vec<usize> },

    #[error(
        "filter bound to spatial extents {expected:?} received input of extents {got:?}; \
         resample the basis with interpolate_filter_basis first"
    )]
    Extent { expected: (usize, usize), got: (usize, usize) },

    #[error("invalid model configuration: {0}")]
    Build(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Contract { op, msg: msg.into() }
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape { op, left: left.to_vec(), right: right.to_vec() }
    }
}

/// Failures reading or applying a `DFCK` container.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {0:?}, expected \"DFCK\"")]
    Magic([u8; 4]),
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("container truncated while reading {0}")]
    Truncated(&'static str),
    #[error("unknown dtype code {0}")]
    Dtype(u8),
    #[error("entry name is not valid UTF-8")]
    Name,
    #[error("checkpoint entry {0:?} does not name a parameter of this model")]
    UnknownParameter(String),
    #[error("model parameter {0:?} is missing from the checkpoint")]
    MissingParameter(String),
    #[error("entry {name:?} has shape {got:?}, model expects {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("duplicate entry {0:?}")]
    Duplicate(String),
}
