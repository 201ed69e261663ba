use thiserror::Error;

/// Errors raised anywhere in the training and partitioning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("row {row} has no diagonal entry")]
    MissingDiagonal { row: usize },

    #[error("invalid sparse structure: {0}")]
    InvalidSparse(String),

    #[error("row {id} is not owned by this block")]
    NotOwned { id: usize },

    #[error("empty label set")]
    EmptyLabels,

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("vertex {vertex} has no part assignment")]
    Unassigned { vertex: usize },

    #[error("balance infeasible: {0}")]
    Infeasible(String),

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("communication error: {0}")]
    Comm(String),

    #[error("missing RP baseline for dataset {0}")]
    MissingBaseline(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn context(self, context: impl Into<String>) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, context: impl Into<String>) -> Result<T> {
        self.map_err(|e| e.context(context))
    }
}
