//! Readers and writers: array containers, annotation documents and report tables.

pub mod array;
pub mod coco;
pub mod humandata;
pub mod npy;
pub mod npz;
pub mod report;

pub use array::{ArrayData, ArrayRecord, DType};
pub use coco::{load_coco, parse_coco, CocoAnnotation, CocoAnnotationDoc, CocoError, CocoImage};
pub use humandata::{load_humandata, HumanDataDoc, HumanDataError};
pub use npy::{read_npy, write_npy};
pub use npz::{read_npz, write_npz, NpzArchive};
pub use report::{Precision, ReportFormat};

use thiserror::Error;

/// Errors from the `.npy` / `.npz` containers. Each failure class has its own variant.
#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not an array container: bad magic bytes")]
    BadMagic,
    #[error("unsupported container version {major}.{minor}")]
    UnsupportedVersion { major: u8, minor: u8 },
    #[error("unsupported element type '{0}'")]
    UnsupportedDtype(String),
    #[error("unsupported layout: {0}")]
    UnsupportedLayout(String),
    #[error("truncated container: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("{extra} unexpected bytes after the payload")]
    TrailingData { extra: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("invalid element value: {0}")]
    InvalidValue(String),
    #[error("shape {shape:?} does not match {elements} elements")]
    ShapeMismatch { shape: Vec<usize>, elements: usize },
    #[error("corrupt archive: {0}")]
    ZipCorrupt(String),
    #[error("archive member '{0}' appears more than once")]
    DuplicateMember(String),
    #[error("archive member '{name}': {source}")]
    Member {
        name: String,
        #[source]
        source: Box<ContainerError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ContainerError {
    /// Stable machine-readable code for each error class.
    pub fn code(&self) -> &'static str {
        match self {
            ContainerError::BadMagic => "bad_magic",
            ContainerError::UnsupportedVersion { .. } => "unsupported_version",
            ContainerError::UnsupportedDtype(_) => "unsupported_dtype",
            ContainerError::UnsupportedLayout(_) => "unsupported_layout",
            ContainerError::Truncated { .. } => "truncated",
            ContainerError::TrailingData { .. } => "trailing_data",
            ContainerError::MalformedHeader(_) => "malformed_header",
            ContainerError::InvalidValue(_) => "invalid_value",
            ContainerError::ShapeMismatch { .. } => "shape_mismatch",
            ContainerError::ZipCorrupt(_) => "zip_corrupt",
            ContainerError::DuplicateMember(_) => "duplicate_member",
            ContainerError::Member { source, .. } => source.code(),
            ContainerError::Io(_) => "io",
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, ContainerError::Io(_))
    }
}

pub fn read_npz_file(path: &std::path::Path) -> Result<NpzArchive, ContainerError> {
    let bytes = std::fs::read(path)?;
    read_npz(&bytes)
}

pub fn write_npz_file(path: &std::path::Path, archive: &NpzArchive) -> Result<(), ContainerError> {
    std::fs::write(path, write_npz(archive))?;
    Ok(())
}
