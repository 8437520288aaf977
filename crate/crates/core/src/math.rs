//! Thin wrappers over `libm` so call sites read like the std float API.

pub const PI: f64 = core::f64::consts::PI;

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn tan(x: f64) -> f64 {
    libm::tan(x)
}

#[inline]
pub fn asin(x: f64) -> f64 {
    libm::asin(x)
}

#[inline]
pub fn acos(x: f64) -> f64 {
    libm::acos(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

#[inline]
pub fn to_rad(deg: f64) -> f64 {
    deg * (PI / 180.0)
}

#[inline]
pub fn to_deg(rad: f64) -> f64 {
    rad * (180.0 / PI)
}

/// Euclidean remainder, always in `[0, m)` for positive `m`.
#[inline]
pub fn rem_euclid(x: f64, m: f64) -> f64 {
    let r = libm::fmod(x, m);
    let r = if r < 0.0 { r + m } else { r };
    // fmod of a tiny negative value plus m can round up to m itself
    if r >= m {
        0.0
    } else {
        r
    }
}

/// Wraps an angle in degrees into `[-180, 180)`.
#[inline]
pub fn wrap_deg_180(deg: f64) -> f64 {
    rem_euclid(deg + 180.0, 360.0) - 180.0
}

/// Wraps an angle in degrees into `[0, 360)`.
#[inline]
pub fn wrap_deg_360(deg: f64) -> f64 {
    rem_euclid(deg, 360.0)
}

