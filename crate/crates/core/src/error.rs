use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, index sets or configuration values that cannot be reconciled.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("coordinate descent did not converge after {sweeps} sweeps (max change {max_change:e})")]
    Convergence {
        sweeps: usize,
        max_change: f64,
        last_iterate: Vec<f64>,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A post-fit audit found a result that the algorithm should never produce.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("all subjects are censored; survival fit needs at least one event")]
    AllCensored,

    /// Raised by the sparse 2-means weight update when no gene separates the clusters.
    #[error("degenerate clustering weights: no gene carries between-cluster signal")]
    DegenerateWeights,

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error beneath any context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}
