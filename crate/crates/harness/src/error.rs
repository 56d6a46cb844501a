use std::path::PathBuf;

use ecprice_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}{}: {msg}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Config {
        path: PathBuf,
        line: Option<usize>,
        msg: String,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no run results under {}", .0.display())]
    EmptyRun(PathBuf),
}

impl HarnessError {
    /// Process exit code for this error: 3 when the solver gave up, 4 for
    /// anything wrong with the inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(CoreError::Solver(_)) => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn write_file(path: impl Into<PathBuf>, text: impl AsRef<[u8]>) -> Result<()> {
    let path = path.into();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(&path, text).map_err(|source| HarnessError::Io { path, source })
}
