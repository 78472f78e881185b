//! Readers and writers for every on-disk artifact.
//!
//! Rasters use the Netpbm family: RGB panoramas are binary PPM (`P6`), masks
//! are binary PGM (`P5`, 0 = excluded, 255 = process) and depth maps are
//! grayscale little-endian PFM (`Pf`, scale −1.0) in meters with non-finite
//! values for missing returns. Structured documents (scene specifications,
//! pipeline configuration, detections) are JSON.

mod json;
mod pfm;
mod pnm;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::image::ImageError;

pub use json::{
    from_json_str, read_config, read_detections, read_json, read_scene, read_truth, write_detections, write_json,
};
pub use pfm::{decode_pfm, encode_pfm, read_depth, write_depth, DepthMap};
pub use pnm::{decode_pgm, decode_ppm, encode_pgm, encode_ppm, read_mask, read_rgb, write_mask, write_rgb};

/// Error produced while decoding an in-memory byte stream.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("at byte {offset}: payload truncated, expected {expected} bytes but {actual} remain")]
    Truncated {
        offset: usize,
        expected: usize,
        actual: usize,
    },
    #[error("big-endian PFM (positive scale {scale}) is not supported")]
    UnsupportedEndianness { scale: f32 },
}

impl FormatError {
    pub(crate) fn malformed(offset: usize, message: impl Into<String>) -> Self {
        Self::Malformed {
            offset,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{path}: invalid image: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ImageError,
    },
    /// JSON that does not match its schema; `field` is the dotted path of the
    /// offending value (`.` for the document root).
    #[error("{path}: field `{field}`: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, source: FormatError) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Field path for schema errors, if any.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Schema { field, .. } => Some(field),
            _ => None,
        }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}
