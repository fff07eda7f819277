use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: {message}")]
    Domain {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("impurity decrease undefined: split has an empty child")]
    EmptyChild,

    #[error("GLM did not converge at lambda={lambda:e} (gradient norm {grad_norm:e} after {iterations} iterations)")]
    NonConvergence {
        lambda: f64,
        grad_norm: f64,
        iterations: usize,
    },

    #[error("leverage of row {row} is {leverage} (>= 1); refit required")]
    DegenerateLeverage { row: usize, leverage: f64 },

    #[error("tree {tree}: {source}")]
    Tree {
        tree: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("incompatible configuration: {0}")]
    Incompatible(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("no candidate passed prediction screening")]
    EmptyScreen,

    #[error("replicate {replicate}, stage `{stage}`: {source}")]
    Replicate {
        replicate: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_tree(self, tree: usize) -> Self {
        Error::Tree {
            tree,
            source: Box::new(self),
        }
    }

    /// True for failures caused by the input data rather than by configuration.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Csv(_)
            | Error::MissingColumn(_)
            | Error::Parse { .. }
            | Error::Domain { .. }
            | Error::InvalidData(_)
            | Error::DimensionMismatch { .. } => true,
            Error::Tree { source, .. } | Error::Replicate { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
