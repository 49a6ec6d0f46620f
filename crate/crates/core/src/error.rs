use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("polyline has no vertices")]
    EmptyPolyline,
    #[error("polyline needs at least {needed} vertices, got {got}")]
    TooFewVertices { needed: usize, got: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("grid dimensions {got_rows}x{got_cols} do not match expected {rows}x{cols}")]
    DimsMismatch {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("invalid label value {0}")]
    InvalidLabelValue(u8),
    #[error("scale factors must be positive, got ({0}, {1})")]
    NonPositiveScale(f64, f64),
    #[error("need at least {needed} points for the fit, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no non-vacuous frames to aggregate")]
    NoFrames,
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("frame {frame}: {labels} labels for {points} points")]
    LabelCountMismatch {
        frame: String,
        labels: usize,
        points: usize,
    },
    #[error("invalid split {0:?}, expected train, val or test")]
    InvalidSplit(String),
    #[error("no odometry link from frame {0}")]
    MissingOdometry(String),
    #[error("unknown frame {0}")]
    UnknownFrame(String),
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingFile(path.into());
        }
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}
