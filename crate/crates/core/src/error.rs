use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected length {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("optimizer did not converge: {message} (last iterate sigma = {sigma}, xi = {xi})")]
    Convergence { message: String, sigma: f64, xi: f64 },

    #[error("t0 selection failed: {0}")]
    Selection(String),

    #[error("coordinate {index} has x0 = 1 (u = 0); drop that margin")]
    DegenerateCoordinate { index: usize },

    #[error("ingestion error at row {row}, column '{column}': {message}")]
    Ingest { row: usize, column: String, message: String },

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Shape { .. } => "shape",
            Error::Capacity(_) => "capacity",
            Error::Domain(_) => "domain",
            Error::Data(_) => "data",
            Error::Convergence { .. } => "convergence",
            Error::Selection(_) => "selection",
            Error::DegenerateCoordinate { .. } => "degenerate_coordinate",
            Error::Ingest { .. } => "ingest",
            Error::UnknownColumn(_) => "unknown_column",
            Error::Context { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Wraps the error with a label such as a margin or scenario name.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
