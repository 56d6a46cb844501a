use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("variable {0} referenced by {1} does not exist")]
    UnknownVariable(usize, String),
    #[error("SOS1 set {set} contains {var}, which must be continuous and nonnegative")]
    InvalidSos1Member { set: String, var: String },
    #[error("{what} requires a finite domain but {var} is unbounded")]
    UnboundedDomain { what: String, var: String },
    #[error("polygon approximation needs at least 4 segments, got {0}")]
    TooFewSegments(usize),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("solution file {path} has no value for variable {name}")]
    MissingVariable { path: PathBuf, name: String },
    #[error("solution file {path} names unknown variable {name}")]
    UnknownName { path: PathBuf, name: String },
    #[error("external solver failed: {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SolverError>;
