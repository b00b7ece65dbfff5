use std::path::PathBuf;

/// Crate-wide error type.
///
/// `is_validation` distinguishes bad inputs/configs (caught before any
/// filesystem mutation) from runtime failures; the CLI maps the former to
/// exit code 2 and the latter to 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("tiff error on {path}: {message}")]
    Tiff { path: PathBuf, message: String },

    #[error("bad metadata in {path}: {message}")]
    Metadata { path: PathBuf, message: String },

    #[error("unsupported bit depth {0} (only 8 and 16 are accepted)")]
    UnsupportedBitDepth(u32),

    #[error("volume shape error: {0}")]
    VolumeShape(String),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("section geometry error: {0}")]
    SectionGeometry(String),

    #[error("axis mismatch: generator is tagged {expected} but stack is {actual}")]
    AxisMismatch { expected: String, actual: String },

    #[error("network error: {0}")]
    Net(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("checkpoint error in {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("metric '{metric}' failed on {context}: {message}")]
    Metric {
        metric: String,
        context: String,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage '{stage}' failed: {message}")]
    Stage { stage: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that indicate invalid user input rather than a
    /// failure while executing an otherwise valid request.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::UnsupportedBitDepth(_)
                | Error::InvalidRange(_)
                | Error::InvalidWeights(_)
                | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
