use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("empty patch-size range: min {min} > max {max}")]
    EmptyRange { min: u32, max: u32 },

    #[error("sweep row {row} (value {value}): {reason}")]
    InvalidSweepRow { row: usize, value: f64, reason: String },

    #[error("patch {patch_h}x{patch_w} exceeds image {height}x{width}")]
    PatchExceedsImage { patch_h: u32, patch_w: u32, height: u32, width: u32 },

    #[error("position ({row}, {col}) out of bounds for {patch_h}x{patch_w} patch on {height}x{width} image")]
    OutOfBounds { row: u32, col: u32, patch_h: u32, patch_w: u32, height: u32, width: u32 },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error("duplicate image id {0}")]
    DuplicateImageId(u32),

    #[error("empty grid for image {0}")]
    EmptyGrid(u32),

    #[error("image {0} has no label")]
    MissingLabel(u32),

    #[error("class index {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },

    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
