use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh contains {count} degenerate face(s)")]
    DegenerateFaces { count: usize },

    #[error("mesh is empty")]
    EmptyMesh,

    #[error("invalid polyline: {0}")]
    InvalidPolyline(String),

    #[error("degenerate fiducial configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("meshes do not intersect")]
    EmptyIntersection,

    #[error("intersection curve does not close: {} open end(s), first gap {:?}", gaps.len(), gaps.first())]
    OpenChain { gaps: Vec<([f64; 3], [f64; 3])> },

    #[error("plan failed validation: {0}")]
    PlanInvalid(String),

    #[error("checksum mismatch: manifest {expected}, computed {actual}")]
    Checksum { expected: String, actual: String },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("not found: {0}")]
    NotFound(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    /// Short stable identifier used in CLI error lines and service responses.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::DegenerateFaces { .. } => "degenerate_faces",
            Error::EmptyMesh => "empty_mesh",
            Error::InvalidPolyline(_) => "invalid_polyline",
            Error::DegenerateConfiguration(_) => "degenerate_configuration",
            Error::EmptyIntersection => "empty_intersection",
            Error::OpenChain { .. } => "open_chain",
            Error::PlanInvalid(_) => "plan_invalid",
            Error::Checksum { .. } => "checksum",
            Error::InvalidTrace(_) => "invalid_trace",
            Error::Config(_) => "config",
            Error::Conflict(_) => "conflict",
            Error::NotFound(_) => "not_found",
        }
    }
}
