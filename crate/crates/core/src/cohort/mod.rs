//! Cohort data model and on-disk formats.

mod features;
mod grid;
mod manifest;
mod mvol;
mod volume;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use features::{
    read_feature_matrix, write_feature_matrix, Aggregation, ColumnMeta, FeatureMatrix, Region,
    SiteScope,
};
pub use grid::{Grid, VoxelBox};
pub use manifest::{
    load_manifest, parse_manifest, write_manifest, CohortManifest, ManifestRow, PatientLabels,
    Recist, Timepoint,
};
pub use mvol::{
    decode_mask, decode_volume, encode_mask, encode_volume, load_mask, load_pair, load_volume,
    write_mask, write_volume,
};
pub use volume::{Lesion, LesionSet, Site, VoxelVolume};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error at header line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("geometry mismatch: volume dims {volume:?} vs mask dims {mask:?} (no resampling is performed)")]
    GeometryMismatch { volume: [usize; 3], mask: [usize; 3] },
    #[error("duplicate manifest key ({patient}, {timepoint})")]
    DuplicateKey { patient: String, timepoint: String },
    #[error("manifest row {row}: crs {value} outside 1..3")]
    CrsRange { row: usize, value: i64 },
    #[error("manifest row {row}: {message}")]
    Manifest { row: usize, message: String },
    #[error("feature matrix schema error: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<CohortError>,
    },
}

impl CohortError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CohortError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (CohortError::Io { .. } | CohortError::InFile { .. }) => e,
            e => CohortError::InFile {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping file-context wrappers.
    pub fn root(&self) -> &CohortError {
        match self {
            CohortError::InFile { source, .. } => source.root(),
            e => e,
        }
    }
}
