use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by image handling, phantom generation and metrics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("{path}: {channels}-channel image given without grayscale conversion enabled")]
    MultiChannel { path: PathBuf, channels: u8 },

    #[error("{path}: unsupported bit depth {bits} (expected 8)")]
    BitDepth { path: PathBuf, bits: u16 },

    #[error("degenerate target size {0}x{1} (minimum 16x16)")]
    DegenerateSize(usize, usize),

    #[error("expected {expected} image, got {actual}")]
    WrongForm {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("dimension mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),

    #[error("no loadable images in {0}")]
    EmptyDataset(PathBuf),

    #[error("mask for `{stem}` is {mask:?} but image is {image:?}")]
    MaskSize {
        stem: String,
        mask: (usize, usize),
        image: (usize, usize),
    },

    #[error("mask `{0}` has no matching image")]
    UnmatchedMask(String),

    #[error("image `{0}` has no matching mask")]
    MissingMask(String),

    #[error("mask `{stem}` contains label {label} (allowed: 0..=3)")]
    BadLabel { stem: String, label: u8 },

    #[error("invalid phantom geometry: {0}")]
    Geometry(String),

    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("region `{0}` is empty")]
    EmptyRegion(&'static str),

    #[error("{0} is undefined for these inputs")]
    Undefined(&'static str),

    #[error("histogram bin counts differ: {0} vs {1}")]
    BinMismatch(usize, usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("insufficient pairs for similarity estimate")]
    InsufficientPairs,

    #[error("image decode failed for {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
