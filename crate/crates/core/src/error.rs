use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("face {face} has {count} vertices; only triangles are supported")]
    NonTriangleFace { face: usize, count: usize },

    #[error("vertex index {index} out of range (vertex count {count})")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("non-manifold or open surface: {0}")]
    NonManifold(String),

    #[error("surface is not genus one (Euler characteristic {euler}, expected 0)")]
    Genus { euler: i64 },

    #[error("surface has {0} connected components; expected 1")]
    Disconnected(usize),

    #[error("degenerate face {face} (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },

    #[error("degenerate image of face {face}: cotangent undefined")]
    DegenerateImageFace { face: usize },

    #[error("image area {area:e} is too small relative to the surface area")]
    ZeroImageArea { area: f64 },

    #[error("invalid torus shape: R = {major}, r = {minor} (need R > r > 0)")]
    InvalidShape { major: f64, minor: f64 },

    #[error("point on the z-axis: azimuth undefined{}", vertex_suffix(.vertex))]
    AxisSingularity { vertex: Option<usize> },

    #[error("point on the core circle: elevation undefined{}", vertex_suffix(.vertex))]
    CoreSingularity { vertex: Option<usize> },

    #[error("point is off the torus by {distance:e}{}", vertex_suffix(.vertex))]
    NotOnManifold { distance: f64, vertex: Option<usize> },

    #[error("vertex map has {rows} rows but the surface has {vertices} vertices")]
    RowCount { rows: usize, vertices: usize },

    #[error("invalid loop: {0}")]
    InvalidLoop(String),

    #[error("loop {0} is not simple (repeated vertex)")]
    NotSimple(usize),

    #[error("loops are not homologically independent: {0}")]
    Independence(String),

    #[error("cut mesh is not a disk (Euler characteristic {euler})")]
    CutNotDisk { euler: i64 },

    #[error("period matrix is singular (determinant {det:e})")]
    SingularPeriods { det: f64 },

    #[error("lattice vectors are linearly dependent")]
    SingularLattice,

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("invalid landmarks: {0}")]
    Landmarks(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line search: {0}")]
    LineSearch(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn vertex_suffix(vertex: &Option<usize>) -> String {
    match vertex {
        Some(v) => format!(" (vertex {v})"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a vertex index to a per-point geometric error.
    pub fn at_vertex(self, index: usize) -> Self {
        match self {
            Error::AxisSingularity { .. } => Error::AxisSingularity {
                vertex: Some(index),
            },
            Error::CoreSingularity { .. } => Error::CoreSingularity {
                vertex: Some(index),
            },
            Error::NotOnManifold { distance, .. } => Error::NotOnManifold {
                distance,
                vertex: Some(index),
            },
            other => other,
        }
    }

    /// Short machine-readable tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::NonTriangleFace { .. } => "non_triangle_face",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::NonManifold(_) => "non_manifold",
            Error::Genus { .. } => "genus",
            Error::Disconnected(_) => "disconnected",
            Error::DegenerateFace { .. } => "degenerate_face",
            Error::DegenerateImageFace { .. } => "degenerate_image_face",
            Error::ZeroImageArea { .. } => "zero_image_area",
            Error::InvalidShape { .. } => "invalid_shape",
            Error::AxisSingularity { .. } => "axis_singularity",
            Error::CoreSingularity { .. } => "core_singularity",
            Error::NotOnManifold { .. } => "not_on_manifold",
            Error::RowCount { .. } => "row_count",
            Error::InvalidLoop(_) => "invalid_loop",
            Error::NotSimple(_) => "not_simple",
            Error::Independence(_) => "independence",
            Error::CutNotDisk { .. } => "cut_not_disk",
            Error::SingularPeriods { .. } => "singular_periods",
            Error::SingularLattice => "singular_lattice",
            Error::Solver(_) => "solver",
            Error::Landmarks(_) => "landmarks",
            Error::Config(_) => "config",
            Error::LineSearch(_) => "line_search",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
