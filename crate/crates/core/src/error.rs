use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the segmentation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("textured shading requested but the mesh has no texture")]
    MissingTexture,

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },

    #[error("render contains no object pixels")]
    EmptyRender,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("label count {actual} does not match face count {expected}")]
    LabelMismatch { expected: usize, actual: usize },

    #[error("meshes do not share face topology: {0}")]
    TopologyMismatch(String),

    #[error("results refer to different meshes: {0}")]
    MeshMismatch(String),

    #[error("unknown label: {0}")]
    UnknownLabel(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("missing precomputed backend output: {}", .0.display())]
    MissingPrecomputed(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the 2D grounding backend.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::BackendUnavailable(_) | Error::MissingPrecomputed(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
