use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the clustering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate bandwidth: all samples are identical")]
    DegenerateBandwidth,
    #[error("zero vector in cosine kernel (sample {0})")]
    ZeroVectorInCosine(usize),
    #[error("non-normalizable kernel: diagonal entry {index} is {value}")]
    NonNormalizable { index: usize, value: f64 },
    #[error("degenerate scaling range: matrix is constant")]
    DegenerateScaling,
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (max deviation {0:e})")]
    NotSymmetric(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("nonconvex QP rejected (smallest eigenvalue {0:e})")]
    NonconvexQp(f64),
    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),
    #[error("undefined NMI")]
    UndefinedNmi,
    #[error("degenerate F statistic")]
    DegenerateFStatistic,
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("not an MKK1 file")]
    BadMagic,
    #[error("config error at `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors caused by bad input (configuration, file contents or
    /// missing files) rather than by the computation itself.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Config { .. } | Error::Json { .. } | Error::Parse { .. } | Error::BadMagic | Error::Csv(_) => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
