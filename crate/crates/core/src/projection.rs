//! Perspective crops from equirectangular panoramas, and the point mappings
//! between crop pixels and panorama pixels.
//!
//! # Conventions
//!
//! Pixel `(i, j)` has its center at the continuous coordinate `(i, j)`.
//!
//! Panorama: column `x` looks toward bearing `heading + (x / width - 0.5) * 360`,
//! row `y` toward elevation `(0.5 - y / height) * 180`. The center column is
//! the heading and the top row is the zenith.
//!
//! Crop camera: `+z` along the optical axis, `+x` right, `+y` down. Square
//! pixel `(u, v)` casts the ray `(u - c, v - c, f)` with `c = square / 2` and
//! `f = c / tan(fov / 2)`. The ray is pitched about the camera x axis, then
//! turned to the crop's absolute yaw about the vertical. Only the middle
//! third of the square's columns is kept: retained column `k` is square
//! column `k + band_start`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geo::PanoMeta;
use crate::image::{EquirectImage, RgbImage};
use crate::math;
use crate::{Error, Result};

pub const FOV_DEG: f64 = 90.0;
pub const PITCH_DEG: f64 = -30.0;
pub const SQUARE_PX: u32 = 1024;

/// Geometry of one directional crop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    /// Absolute compass bearing of the optical axis, in `[0, 360)`.
    pub yaw_deg: f64,
    /// Negative values look below the horizon.
    pub pitch_deg: f64,
    pub fov_deg: f64,
    pub square_px: u32,
}

impl CropSpec {
    /// A crop with the default 90° field of view, 30° downward pitch and
    /// 1024 px square.
    pub fn toward(yaw_deg: f64) -> Self {
        Self {
            yaw_deg: math::wrap_deg_360(yaw_deg),
            pitch_deg: PITCH_DEG,
            fov_deg: FOV_DEG,
            square_px: SQUARE_PX,
        }
    }

    pub fn new(yaw_deg: f64, pitch_deg: f64, fov_deg: f64, square_px: u32) -> Result<Self> {
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "field of view {fov_deg} must be in (0, 180)"
            )));
        }
        if !(-90.0..=90.0).contains(&pitch_deg) {
            return Err(Error::InvalidParameter(alloc::format!(
                "pitch {pitch_deg} must be in [-90, 90]"
            )));
        }
        if square_px < 3 {
            return Err(Error::InvalidParameter(alloc::format!(
                "crop square {square_px} px is too small"
            )));
        }
        if !yaw_deg.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("yaw {yaw_deg} is not finite")));
        }
        Ok(Self {
            yaw_deg: math::wrap_deg_360(yaw_deg),
            pitch_deg,
            fov_deg,
            square_px,
        })
    }

    pub fn with_yaw(&self, yaw_deg: f64) -> Self {
        Self {
            yaw_deg: math::wrap_deg_360(yaw_deg),
            ..*self
        }
    }

    /// Width of the retained band (341 for a 1024 square).
    pub fn band_width(&self) -> u32 {
        self.square_px / 3
    }

    /// First square column of the retained band (341 for a 1024 square).
    pub fn band_start(&self) -> u32 {
        (self.square_px - self.band_width()) / 2
    }

    pub fn focal_px(&self) -> f64 {
        self.principal() / math::tan(math::to_rad(self.fov_deg) / 2.0)
    }

    fn principal(&self) -> f64 {
        self.square_px as f64 / 2.0
    }

    /// Retained-band coordinates of the optical axis.
    pub fn crop_center(&self) -> (f64, f64) {
        (self.principal() - self.band_start() as f64, self.principal())
    }
}

impl Default for CropSpec {
    fn default() -> Self {
        Self::toward(0.0)
    }
}

/// A continuous panorama pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanoPixel {
    pub x: f64,
    pub y: f64,
}

/// A viewing direction: compass bearing in `[-180, 180)` and elevation in `[-90, 90]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub bearing_deg: f64,
    pub elevation_deg: f64,
}

pub fn pixel_to_direction(p: PanoPixel, pano: &PanoMeta) -> Direction {
    let (w, h) = (pano.width_px() as f64, pano.height_px() as f64);
    Direction {
        bearing_deg: math::wrap_deg_180(pano.heading_deg() + (p.x / w - 0.5) * 360.0),
        elevation_deg: (0.5 - p.y / h) * 180.0,
    }
}

/// Inverse of [`pixel_to_direction`]; `x` lands in `[0, width)`.
pub fn direction_to_pixel(d: Direction, pano: &PanoMeta) -> PanoPixel {
    let (w, h) = (pano.width_px() as f64, pano.height_px() as f64);
    let rel = math::wrap_deg_180(d.bearing_deg - pano.heading_deg());
    PanoPixel {
        x: math::rem_euclid(w * (0.5 + rel / 360.0), w),
        y: (h * (0.5 - d.elevation_deg / 180.0)).clamp(0.0, h),
    }
}

/// Crop camera with trig precomputed.
#[derive(Debug, Clone, Copy)]
struct Camera {
    sin_yaw: f64,
    cos_yaw: f64,
    sin_pitch: f64,
    cos_pitch: f64,
    focal: f64,
    principal: f64,
    band_start: f64,
}

impl Camera {
    fn new(spec: &CropSpec) -> Self {
        let yaw = math::to_rad(spec.yaw_deg);
        // downward pitch is a positive rotation toward +y
        let down = math::to_rad(-spec.pitch_deg);
        Self {
            sin_yaw: math::sin(yaw),
            cos_yaw: math::cos(yaw),
            sin_pitch: math::sin(down),
            cos_pitch: math::cos(down),
            focal: spec.focal_px(),
            principal: spec.principal(),
            band_start: spec.band_start() as f64,
        }
    }

    /// World (east, north, up) ray through retained-band pixel `(u, v)`.
    fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        let x = u + self.band_start - self.principal;
        let y = v - self.principal;
        let z = self.focal;
        let y_lvl = y * self.cos_pitch + z * self.sin_pitch;
        let z_lvl = -y * self.sin_pitch + z * self.cos_pitch;
        [
            x * self.cos_yaw + z_lvl * self.sin_yaw,
            -x * self.sin_yaw + z_lvl * self.cos_yaw,
            -y_lvl,
        ]
    }

    /// Retained-band pixel hit by world ray `w`, if it is in front of the camera.
    fn project(&self, w: [f64; 3]) -> Option<(f64, f64)> {
        let x = w[0] * self.cos_yaw - w[1] * self.sin_yaw;
        let z_lvl = w[0] * self.sin_yaw + w[1] * self.cos_yaw;
        let y_lvl = -w[2];
        let y = y_lvl * self.cos_pitch - z_lvl * self.sin_pitch;
        let z = y_lvl * self.sin_pitch + z_lvl * self.cos_pitch;
        if z <= 0.0 {
            return None;
        }
        let u = self.principal + self.focal * x / z - self.band_start;
        let v = self.principal + self.focal * y / z;
        Some((u, v))
    }
}

fn ray_direction(w: [f64; 3]) -> Direction {
    Direction {
        bearing_deg: math::wrap_deg_180(math::to_deg(math::atan2(w[0], w[1]))),
        elevation_deg: math::to_deg(math::atan2(w[2], math::hypot(w[0], w[1]))),
    }
}

pub(crate) fn direction_ray(d: Direction) -> [f64; 3] {
    let (b, e) = (math::to_rad(d.bearing_deg), math::to_rad(d.elevation_deg));
    let c = math::cos(e);
    [c * math::sin(b), c * math::cos(b), math::sin(e)]
}

/// Direction of retained-band crop pixel `(u, v)`.
pub fn crop_point_direction(u: f64, v: f64, spec: &CropSpec) -> Direction {
    ray_direction(Camera::new(spec).ray(u, v))
}

/// Maps a retained-band crop point back onto the panorama.
pub fn crop_point_to_pano(u: f64, v: f64, pano: &PanoMeta, spec: &CropSpec) -> PanoPixel {
    direction_to_pixel(crop_point_direction(u, v, spec), pano)
}

/// Euclidean pixel distance on a panorama of `width` columns, measuring `x`
/// the short way around the seam.
pub fn wrapped_distance(ax: f64, ay: f64, bx: f64, by: f64, width: u32) -> f64 {
    let w = width as f64;
    let dx = math::rem_euclid(ax - bx, w);
    math::hypot(dx.min(w - dx), ay - by)
}

/// Maps a panorama point into the retained band of a crop, or `None` when it
/// lies behind the camera or outside the band.
pub fn pano_point_to_crop(p: PanoPixel, pano: &PanoMeta, spec: &CropSpec) -> Option<(f64, f64)> {
    let w = direction_ray(pixel_to_direction(p, pano));
    let (u, v) = Camera::new(spec).project(w)?;
    let in_band = (0.0..spec.band_width() as f64).contains(&u);
    let in_rows = (0.0..spec.square_px as f64).contains(&v);
    (in_band && in_rows).then_some((u, v))
}

/// A rendered directional crop: `band_width x square_px` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct CropImage {
    pub image: RgbImage,
    pub spec: CropSpec,
    pub pano_id: String,
}

/// Read access to panorama pixels; lets tests observe every sample.
pub trait PixelSource {
    fn width(&self) -> u32;
    fn height(&self) -> u32;
    fn pixel(&self, x: u32, y: u32) -> [u8; 3];
}

impl PixelSource for RgbImage {
    fn width(&self) -> u32 {
        RgbImage::width(self)
    }

    fn height(&self) -> u32 {
        RgbImage::height(self)
    }

    #[inline]
    fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        self.get(x, y)
    }
}

const FRAC_BITS: u32 = 20;

/// Precomputed sampling table for one crop geometry and panorama size.
///
/// The table stores, per crop pixel, the horizontal offset from the yaw
/// column and the absolute source row; both are independent of yaw and
/// heading, so one sampler renders every crop of every panorama with the same
/// dimensions. The yaw column is snapped to a 2^-20 px grid so that rotating
/// the panorama by whole columns and turning the yaw by the matching angle
/// yields bit-identical crops.
#[derive(Debug, Clone)]
pub struct CropSampler {
    geometry: CropSpec,
    width: u32,
    height: u32,
    table: Vec<(f64, f64)>,
}

impl CropSampler {
    pub fn new(geometry: &CropSpec, pano_width: u32, pano_height: u32) -> Self {
        let geometry = geometry.with_yaw(0.0);
        let cam = Camera::new(&geometry);
        let (w, h) = (pano_width as f64, pano_height as f64);
        let (bw, sq) = (geometry.band_width(), geometry.square_px);
        let mut table = Vec::with_capacity(bw as usize * sq as usize);
        for v in 0..sq {
            for u in 0..bw {
                let d = ray_direction(cam.ray(u as f64, v as f64));
                table.push((w * d.bearing_deg / 360.0, h * (0.5 - d.elevation_deg / 180.0)));
            }
        }
        Self {
            geometry,
            width: pano_width,
            height: pano_height,
            table,
        }
    }

    pub fn pano_dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Renders the crop looking toward `yaw_deg` with bilinear sampling,
    /// wrapping horizontally and clamping vertically.
    pub fn render<S: PixelSource + ?Sized>(&self, src: &S, heading_deg: f64, yaw_deg: f64) -> RgbImage {
        debug_assert_eq!((src.width(), src.height()), (self.width, self.height));
        let w = self.width as i64;
        let max_y = self.height - 1;
        let base = self.width as f64 * (0.5 + math::wrap_deg_180(yaw_deg - heading_deg) / 360.0);
        let fixed = math::round(base * (1u64 << FRAC_BITS) as f64) as i64;
        let base_int = fixed >> FRAC_BITS;
        let base_frac = (fixed & ((1 << FRAC_BITS) - 1)) as f64 / (1u64 << FRAC_BITS) as f64;

        let (bw, sq) = (self.geometry.band_width(), self.geometry.square_px);
        let mut data = Vec::with_capacity(bw as usize * sq as usize * 3);
        for &(dx, sy) in &self.table {
            let t = base_frac + dx;
            let ti = math::floor(t);
            let fx = t - ti;
            let x0 = (base_int + ti as i64).rem_euclid(w) as u32;
            let x1 = if x0 + 1 == self.width { 0 } else { x0 + 1 };
            let yf = math::floor(sy);
            let (y0, y1, fy) = if sy <= 0.0 {
                (0, 0, 0.0)
            } else if yf as u32 >= max_y {
                (max_y, max_y, 0.0)
            } else {
                (yf as u32, yf as u32 + 1, sy - yf)
            };
            let (a, b) = (src.pixel(x0, y0), src.pixel(x1, y0));
            let (c, d) = (src.pixel(x0, y1), src.pixel(x1, y1));
            let (w00, w10) = ((1.0 - fx) * (1.0 - fy), fx * (1.0 - fy));
            let (w01, w11) = ((1.0 - fx) * fy, fx * fy);
            for ch in 0..3 {
                let val = w00 * a[ch] as f64 + w10 * b[ch] as f64 + w01 * c[ch] as f64 + w11 * d[ch] as f64;
                data.push(math::floor(val + 0.5).clamp(0.0, 255.0) as u8);
            }
        }
        RgbImage::from_raw(bw, sq, data).expect("table covers the crop")
    }

    /// Renders a crop of `img` for `pano` toward `yaw_deg`.
    pub fn extract(&self, img: &EquirectImage, pano: &PanoMeta, yaw_deg: f64) -> Result<CropImage> {
        check_dims(img, pano)?;
        if (img.width(), img.height()) != (self.width, self.height) {
            return Err(Error::InvalidParameter(alloc::format!(
                "sampler built for {}x{}, image is {}x{}",
                self.width,
                self.height,
                img.width(),
                img.height()
            )));
        }
        Ok(CropImage {
            image: self.render(img.image(), pano.heading_deg(), yaw_deg),
            spec: self.geometry.with_yaw(yaw_deg),
            pano_id: pano.pano_id().into(),
        })
    }
}

fn check_dims(img: &EquirectImage, pano: &PanoMeta) -> Result<()> {
    if img.width() != pano.width_px() || img.height() != pano.height_px() {
        return Err(Error::DimensionMismatch {
            pano_id: pano.pano_id().into(),
            expected_w: pano.width_px(),
            expected_h: pano.height_px(),
            actual_w: img.width(),
            actual_h: img.height(),
        });
    }
    Ok(())
}

/// One-off crop extraction with the default geometry. Use [`CropSampler`]
/// when rendering many crops.
pub fn extract_crop(img: &EquirectImage, pano: &PanoMeta, yaw_deg: f64) -> Result<CropImage> {
    check_dims(img, pano)?;
    CropSampler::new(&CropSpec::default(), img.width(), img.height()).extract(img, pano, yaw_deg)
}
