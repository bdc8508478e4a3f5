//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum DetlabError {
    #[error("invalid bounding box (cx={cx}, cy={cy}, w={w}, h={h}): {reason}")]
    InvalidBBox {
        cx: f64,
        cy: f64,
        w: f64,
        h: f64,
        reason: String,
    },

    #[error("invalid canvas size {width}x{height}: dimensions must be >= 1")]
    InvalidCanvas { width: u32, height: u32 },

    #[error("raster dimension mismatch: {expected} vs {actual}")]
    RasterDimensionMismatch { expected: String, actual: String },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("empty source rectangle in paste operation")]
    EmptyPatch,

    #[error("{path}:{line}: {message}")]
    LabelParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("mixing plan error: {0}")]
    MixPlan(String),

    #[error("unknown image id '{0}'")]
    UnknownImageId(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("experiment config error: {0}")]
    Config(String),

    #[error("harness error: {0}")]
    Harness(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl DetlabError {
    /// Attach path context to an I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DetlabError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, DetlabError>;
