//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The input stream could not be read or decoded at all.
    #[error("input error: {0}")]
    Input(String),

    /// A knob is outside its documented range, or the data cannot support
    /// the requested configuration (e.g. fewer distinct rows than clusters).
    #[error("configuration error: {0}")]
    Config(String),

    /// Cleaning removed every question, or labeling produced no experts.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A persisted artifact is missing, unreadable, or fails validation.
    #[error("artifact error: {0}")]
    Artifact(String),

    /// Two artifacts were produced by different upstream runs.
    #[error("lineage mismatch: {0}")]
    Lineage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
