//! Image decoding and encoding, and the directory-backed image provider.

use std::io;
use std::path::{Path, PathBuf};

use curbscape_core::catalog::ImageProvider;
use curbscape_core::heatmap::Heatmap;
use curbscape_core::image::{EquirectImage, RgbImage};
use image::{ImageBuffer, ImageEncoder, Luma};

use crate::fsutil;

#[derive(Debug, thiserror::Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Encode(#[from] image::ImageError),
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, ImageIoError> {
    let img = image::open(path).map_err(|source| ImageIoError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(RgbImage::from_raw(w, h, rgb.into_raw()).expect("decoder returns w*h*3 bytes"))
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, ImageIoError> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

pub fn save_png(path: &Path, img: &RgbImage) -> Result<(), ImageIoError> {
    let bytes = encode_png(img)?;
    fsutil::write_atomic(path, &bytes).map_err(|source| ImageIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a heatmap as 16-bit grayscale, each value scaled by 65535.
pub fn save_heatmap_png(path: &Path, map: &Heatmap) -> Result<(), ImageIoError> {
    let px: Vec<u16> = map
        .values()
        .iter()
        .map(|v| (v * 65535.0 + 0.5).floor() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width(), map.height(), px).expect("one value per cell");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)?;
    fsutil::write_atomic(path, out.get_ref()).map_err(|source| ImageIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_heatmap_png(path: &Path) -> Result<Heatmap, ImageIoError> {
    let img = image::open(path).map_err(|source| ImageIoError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let g = img.into_luma16();
    let (w, h) = g.dimensions();
    let values = g.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
    Ok(Heatmap::from_values(w, h, values).expect("one value per cell"))
}

/// Serves `<root>/<pano_id>.png` or `<root>/<pano_id>.jpg`.
#[derive(Debug, Clone)]
pub struct DirectoryProvider {
    root: PathBuf,
}

impl DirectoryProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn locate(&self, pano_id: &str) -> Option<PathBuf> {
        ["png", "jpg"]
            .iter()
            .map(|ext| self.root.join(format!("{pano_id}.{ext}")))
            .find(|p| p.is_file())
    }
}

impl ImageProvider for DirectoryProvider {
    fn fetch(&self, pano_id: &str) -> Result<Option<EquirectImage>, String> {
        if pano_id.is_empty() || pano_id.contains(['/', '\\']) || pano_id.starts_with('.') {
            return Err(format!("pano id {pano_id:?} is not a valid file name"));
        }
        let Some(path) = self.locate(pano_id) else {
            return Ok(None);
        };
        let img = load_rgb(&path).map_err(|e| e.to_string())?;
        EquirectImage::new(img).map(Some).map_err(|e| format!("{}: {e}", path.display()))
    }
}
