use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("latitude {0} is outside [-90, 90]")]
    InvalidLatitude(f64),
    #[error("non-finite coordinate ({lat}, {lon})")]
    NonFiniteCoordinate { lat: f64, lon: f64 },
    #[error("bearing is undefined between coincident points")]
    CoincidentPoints,
    #[error("duplicate ramp id `{0}`")]
    DuplicateRampId(String),
    #[error("duplicate pano id `{0}`")]
    DuplicatePanoId(String),
    #[error("image {width}x{height} is not a 2:1 equirectangular panorama")]
    AspectRatio { width: u32, height: u32 },
    #[error("image dimensions must be positive")]
    ZeroDimension,
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("pano `{pano_id}`: image is {actual_w}x{actual_h}, catalog declares {expected_w}x{expected_h}")]
    DimensionMismatch {
        pano_id: String,
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },
    #[error("image provider failed for pano `{pano_id}`: {message}")]
    Provider { pano_id: String, message: String },
    #[error("localizer failed: {0}")]
    Localizer(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
