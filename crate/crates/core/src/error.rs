use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver diverged at sweep {sweep}; try a smaller step size")]
    Diverged { sweep: usize },

    #[error("dark-band ring too small: {count} pixels (need at least {min})")]
    RingTooSmall { count: usize, min: usize },

    #[error("insufficient matches: {found} (need at least {min})")]
    InsufficientMatches { found: usize, min: usize },

    #[error("stereo needs at least two drops, got {0}")]
    InsufficientDrops(usize),

    #[error("degenerate ray geometry (condition number {cond:.3e})")]
    DegenerateGeometry { cond: f64 },

    #[error("ray points away from the scene (r_oz = {0})")]
    BehindCamera(f64),

    #[error("no valid output pixels: {0}")]
    EmptyOutput(String),

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}, line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
