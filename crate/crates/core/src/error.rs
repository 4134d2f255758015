use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Header is short, truncated, or declares an impossible layout.
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    /// Wrong magic bytes or an unsupported pixel format.
    #[error("format error: {0}")]
    Format(String),

    #[error("dimension overflow: {channels}x{height}x{width} does not fit in memory")]
    DimensionOverflow { channels: u64, height: u64, width: u64 },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    /// The projection back to the clean state divides by sqrt(alpha_bar_t).
    #[error("singular schedule: alpha_bar is zero at step {step}")]
    SingularSchedule { step: usize },

    #[error("no frames found in {}", .0.display())]
    NoFrames(PathBuf),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),

    /// Wraps an error with the experiment stage that raised it.
    #[error("[{stage}] {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Attach a stage label; used by the experiment runner for diagnostics.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
