//! Error type shared by every reconstruction stage.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid field geometry: {0}")]
    InvalidGeometry(String),

    #[error("negative intensity {value} at pixel ({x}, {y})")]
    NegativeIntensity { x: usize, y: usize, value: f64 },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("focus peak at search window edge (z = {z} um); widen the window")]
    NoPeak { z: f64 },

    #[error("high-resolution cell ({x}, {y}) received no samples")]
    EmptyCell { x: usize, y: usize },

    #[error("no measurements supplied")]
    EmptyMeasurements,

    #[error("sample-to-sensor distance must be positive, got {0} um")]
    NonPositiveZ(f64),

    #[error("wavelength grid mismatch: {0}")]
    GridMismatch(String),

    #[error("acquisition configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("tiles leave pixel ({x}, {y}) uncovered")]
    CoverageGap { x: usize, y: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Attaches a pipeline stage label to errors bubbling out of a sub-operation.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}
