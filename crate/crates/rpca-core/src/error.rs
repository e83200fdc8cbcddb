use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or symmetry violations of matrix arguments.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid parameter values (negative tolerances, bad grids, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Factorization breakdowns, singular systems, non-finite data.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An iterative method hit its iteration cap before reaching tolerance.
    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn parse(path: &std::path::Path, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            msg: msg.into(),
        }
    }
}
