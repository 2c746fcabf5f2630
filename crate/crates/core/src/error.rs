use std::path::PathBuf;

/// Errors surfaced by the simulation, chaos and dataset layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("solution blew up at step {step} (t = {time}): {detail}")]
    BlowUp { step: usize, time: f64, detail: String },

    #[error("chaos index set for I={i}, J={j}, K={k} is too large ({detail})")]
    ChaosTooLarge {
        i: usize,
        j: usize,
        k: usize,
        detail: String,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checksum mismatch for {path}: manifest says {expected:08x}, file has {found:08x}")]
    Checksum { path: PathBuf, expected: u32, found: u32 },

    #[error("unsupported dataset format version {found} (reader supports {supported})")]
    FormatVersion { found: u32, supported: u32 },

    #[error("malformed tensor file {path}: {detail}")]
    MalformedTensor { path: PathBuf, detail: String },

    #[error("dataset inconsistent with manifest: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
