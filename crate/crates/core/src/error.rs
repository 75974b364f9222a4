use thiserror::Error;

/// Errors raised across the library. Variants map onto the CLI exit-code
/// classes via [`MpaError::class`].
#[derive(Debug, Error)]
pub enum MpaError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("non-finite {0} loss")]
    NonFiniteTerm(&'static str),
    #[error("non-finite {term} loss at epoch {epoch}")]
    NonFiniteLoss { term: &'static str, epoch: usize },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Config,
    Data,
    Shape,
    Numeric,
}

impl MpaError {
    pub fn class(&self) -> ErrorClass {
        match self {
            MpaError::Io(_) => ErrorClass::Io,
            MpaError::Config(_) | MpaError::Parameter(_) | MpaError::Input(_) => ErrorClass::Config,
            MpaError::DegenerateInput(_)
            | MpaError::InvalidData(_)
            | MpaError::Label(_)
            | MpaError::Schema(_)
            | MpaError::Parse { .. }
            | MpaError::Checkpoint(_) => ErrorClass::Data,
            MpaError::Shape(_) | MpaError::Dimension(_) | MpaError::Size(_) => ErrorClass::Shape,
            MpaError::Numeric(_) | MpaError::NonFiniteTerm(_) | MpaError::NonFiniteLoss { .. } => {
                ErrorClass::Numeric
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, MpaError>;
