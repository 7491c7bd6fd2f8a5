use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic: expected a single-file NIfTI-1 header (\"n+1\\0\")")]
    BadMagic,
    #[error("invalid NIfTI header: {0}")]
    Header(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("truncated data: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("image is not 3-D (dim = {0:?})")]
    NotThreeDimensional([i16; 8]),
    #[error("degenerate orientation: {0}")]
    DegenerateOrientation(String),
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("empty mask")]
    EmptyMask,
    #[error("bias correction failed: {0}")]
    BiasCorrection(String),
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
    #[error("empty mesh")]
    EmptyMesh,
    #[error("empty crop: no vertices survive the crop planes")]
    EmptyCrop,
    #[error("degenerate control points: {0}")]
    DegenerateControlPoints(String),
    #[error("no samples: ray count must be positive")]
    NoSamples,
    #[error("mesh has no per-vertex quality")]
    MissingQuality,
    #[error("non-manifold edge ({0}, {1}) shared by more than two triangles")]
    NonManifold(u32, u32),
    #[error("malformed PLY: {0}")]
    Ply(String),
    #[error("truncated PLY payload: {0}")]
    PlyTruncated(String),
    #[error("ICP failed: {0}")]
    Icp(String),
    #[error("missing landmark {0:?}")]
    MissingLandmark(String),
    #[error("duplicate landmark name {0:?}")]
    DuplicateLandmark(String),
    #[error("landmark file: {0}")]
    LandmarkFormat(String),
    #[error("group data: {0}")]
    Group(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("degenerate hull: {0}")]
    DegenerateHull(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
