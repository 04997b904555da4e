//! Error taxonomy shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used to map failures to process exit codes:
/// bad input vs. a solve that did not meet its tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Solver,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),

    #[error("media: {0}")]
    Media(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },

    #[error("solver: {msg} (achieved residual {residual:.3e} after {iterations} iterations)")]
    Solver {
        msg: String,
        residual: f64,
        iterations: usize,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("basis build failed for {n} of {total} degrees of freedom; first failure at dof {dof}: {msg}",
            n = .failures.len(), dof = .failures[0].0, msg = .failures[0].1)]
    BasisBatch {
        total: usize,
        /// Nonempty; (flat auxiliary dof index, message) per failed build.
        failures: Vec<(usize, String)>,
    },

    #[error("relative error undefined: zero reference norm in continuum {continuum}")]
    UndefinedRelativeError {
        /// 1-based continuum number, as reported to users.
        continuum: usize,
    },

    #[error("refused: {0}")]
    Refused(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap with an experiment stage label, preserving the root cause.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Solver { .. } | Error::Singular(_) | Error::BasisBatch { .. } => {
                ErrorClass::Solver
            }
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Config,
        }
    }
}

/// Extension adding stage labels to any fallible pipeline step.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
