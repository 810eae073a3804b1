use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-triangle face at index {face} ({arity} vertices)")]
    NonTriangleFace { face: usize, arity: usize },

    #[error("face {face} references vertex {vertex}, but the mesh has {count} vertices")]
    InvalidVertexIndex {
        face: usize,
        vertex: usize,
        count: usize,
    },

    #[error("face {face} repeats a vertex index")]
    RepeatedFaceVertex { face: usize },

    #[error("non-manifold edge ({a}, {b}) shared by more than two faces")]
    NonManifoldEdge { a: usize, b: usize },

    #[error("non-manifold vertex {vertex}: incident faces do not form a single fan")]
    NonManifoldVertex { vertex: usize },

    #[error("inconsistent orientation: directed edge ({a}, {b}) is used by two faces")]
    InconsistentOrientation { a: usize, b: usize },

    #[error("mesh has {components} connected components (expected 1)")]
    Disconnected { components: usize },

    #[error("mesh has no faces")]
    EmptyMesh,

    #[error("degenerate edge {edge}: length {length:e} below threshold {threshold:e}")]
    DegenerateEdge {
        edge: usize,
        length: f64,
        threshold: f64,
    },

    #[error("triangle inequality violated on face {face}")]
    TriangleInequality { face: usize },

    #[error("edge {edge} has non-positive squared length {squared:e}")]
    NegativeSquaredLength { edge: usize, squared: f64 },

    #[error("vertex {vertex} has non-positive circle radius {radius:e}")]
    NonPositiveRadius { vertex: usize, radius: f64 },

    #[error("face {face} flipped orientation")]
    FaceFlipped { face: usize },

    #[error("face {face} cannot be laid out in the plane (collinear vertices)")]
    DegenerateLayout { face: usize },

    #[error("target curvature sums to {sum}, expected 2*pi*chi = {expected}")]
    InadmissibleTarget { sum: f64, expected: f64 },

    #[error("target curvature has {got} entries for a mesh with {expected} vertices")]
    TargetSize { got: usize, expected: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("mesh is not a topological disk (chi = {euler}, boundary loops = {loops})")]
    NotDisk { euler: i64, loops: usize },

    #[error("interior vertex {vertex} has curvature {curvature:e}; metric is not flat enough to embed")]
    NotFlat { vertex: usize, curvature: f64 },

    #[error("circle intersection empty while placing vertex {vertex} of face {face}")]
    EmptyIntersection { face: usize, vertex: usize },

    #[error("face index {face} out of range")]
    InvalidFace { face: usize },

    #[error("vertex index {vertex} out of range")]
    InvalidVertex { vertex: usize },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("no vertex has |K| > {tau}; lower the curvature threshold")]
    EmptySelection { tau: f64 },

    #[error("stage {stage} out of range (trace has {count} stages)")]
    InvalidStage { stage: usize, count: usize },

    #[error("non-finite {feature} feature at vertex {vertex}, stage {stage}")]
    NonFinite {
        feature: &'static str,
        vertex: usize,
        stage: usize,
    },

    #[error("covariance needs at least 2 rows, got {rows}")]
    TooFewRows { rows: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e})")]
    NotSpd { eigenvalue: f64 },

    #[error("invalid K = {k}: {reason}")]
    InvalidK { k: usize, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("noise of this magnitude breaks the mesh ({0}); use a smaller sigma")]
    NoiseTooLarge(Box<Error>),

    #[error("config error: {0}")]
    Config(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("signature file error: {0}")]
    SignatureFormat(String),

    #[error("trace file error: {0}")]
    TraceFormat(String),

    #[error("Ricci flow did not converge after {iterations} iterations (residual {residual:e}, {reason})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("subject {subject}: {source}")]
    Subject {
        subject: String,
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

    /// True for errors caused by bad inputs rather than failed computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Subject { source, .. } => source.is_validation(),
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::NonTriangleFace { .. }
            | Error::InvalidVertexIndex { .. }
            | Error::RepeatedFaceVertex { .. }
            | Error::NonManifoldEdge { .. }
            | Error::NonManifoldVertex { .. }
            | Error::InconsistentOrientation { .. }
            | Error::Disconnected { .. }
            | Error::EmptyMesh
            | Error::InadmissibleTarget { .. }
            | Error::TargetSize { .. }
            | Error::InvalidK { .. }
            | Error::InvalidParameter(_)
            | Error::Config(_)
            | Error::Manifest(_)
            | Error::SignatureFormat(_)
            | Error::TraceFormat(_) => true,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
