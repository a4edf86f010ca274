use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("fingertip factor {0} outside (0, 1]")]
    BadFactor(f64),
    #[error("keypoint {index} is behind the camera (Z = {z})")]
    BehindCamera { index: usize, z: f64 },
    #[error("keypoint {index} has non-positive depth {z}")]
    BadDepth { index: usize, z: f64 },
    #[error("invalid camera intrinsics: {0}")]
    BadIntrinsics(String),
    #[error("degenerate crop box or affine map: {0}")]
    DegenerateBox(String),
    #[error("normalization bone ({0}, {1}) has zero length")]
    ZeroBone(usize, usize),
    #[error("normalization pair ({0}, {1}) is not a bone of the skeleton")]
    NotABone(usize, usize),
    #[error("normalization keypoint {0} is not valid")]
    InvalidPair(usize),
    #[error("pair projects to a single point (a = {0:e})")]
    DegenerateProjection(f64),
    #[error("no real root depth (discriminant {0:e})")]
    NoRealSolution(f64),
    #[error("reconstructed keypoint {index} has non-positive depth {z}")]
    NonPositiveDepth { index: usize, z: f64 },
    #[error("no bone with two valid endpoints and nonzero length")]
    NoValidBones,
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("keypoint {index} at ({x}, {y}) lies outside the {width}x{height} grid")]
    OutOfGrid {
        index: usize,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("probability map is not normalized (sum {0})")]
    NotNormalized(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no valid keypoints")]
    NoValidKeypoints,
    #[error("both sample pools are empty")]
    EmptyPools,
    #[error("root keypoint {0} is not valid")]
    InvalidRoot(usize),
    #[error("threshold list is empty or not strictly increasing")]
    EmptyThresholds,
    #[error("curve needs at least two points")]
    TooFewPoints,
    #[error("head length must be positive, got {0}")]
    BadHeadLength(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown gradcheck target `{0}`")]
    UnknownTarget(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerical pipeline itself, as opposed to bad
    /// input data or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateProjection(_)
                | Error::NoRealSolution(_)
                | Error::NonPositiveDepth { .. }
                | Error::NoValidBones
                | Error::ZeroBone(..)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
