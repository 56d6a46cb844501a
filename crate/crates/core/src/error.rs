use std::path::PathBuf;

use ecprice_solver::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Bad or inconsistent input data, located as precisely as the format allows.
    #[error("{}{}: field `{field}`: {msg}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Input {
        path: PathBuf,
        line: Option<usize>,
        field: String,
        msg: String,
    },
    #[error("cannot read {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("stale duals: complementarity residual {residual:.3e} exceeds {tol:.1e}")]
    StaleDuals { residual: f64, tol: f64 },
    #[error("lower-level LP for prosumer {prosumer}: {msg}")]
    Dispatch { prosumer: u32, msg: String },
    #[error("capacity curve: {0}")]
    Curve(String),
    #[error("{0}")]
    Solver(#[from] SolverError),
}

impl CoreError {
    pub(crate) fn input(path: impl Into<PathBuf>, line: Option<usize>, field: &str, msg: impl Into<String>) -> Self {
        CoreError::Input {
            path: path.into(),
            line,
            field: field.to_string(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
