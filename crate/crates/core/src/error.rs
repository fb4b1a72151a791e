use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A text input (CSV, label file, spec file) could not be parsed.
    #[error("parse error at line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        column: Option<usize>,
        message: String,
    },

    /// A binary input (IDX, graph cache) is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// The conjugate-gradient inner solve did not reach its tolerance.
    #[error("solver stalled: CG residual {residual:e} after {iterations} iterations")]
    SolverStall { residual: f64, iterations: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(line: usize, column: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: msg.into(),
        }
    }
}
