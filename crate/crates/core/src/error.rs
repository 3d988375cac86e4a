use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("atom clash between pairs {pairs:?}")]
    Clash { pairs: Vec<(usize, usize)> },

    #[error("index {index} out of range for {len} items")]
    Index { index: usize, len: usize },

    #[error("size mismatch: expected {expected}, found {found}")]
    Size { expected: usize, found: usize },

    #[error("shape mismatch: expected width {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("invalid rigid transform: {0}")]
    Transform(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("no pocket atoms within {cutoff} Å of the ligand")]
    EmptyPocket { cutoff: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        history: Vec<f64>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by numerics rather than by the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Diverged { .. })
    }
}
