//! Plain 8-bit RGB rasters.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Row-major 8-bit RGB image.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl core::fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("RgbImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RgbImage {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = vec![0u8; n * 3];
        for px in data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::BufferSize {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn row_mut(&mut self, y: u32) -> &mut [u8] {
        let stride = self.width as usize * 3;
        let start = y as usize * stride;
        &mut self.data[start..start + stride]
    }

    /// Mirrors the image left to right.
    pub fn flipped_horizontal(&self) -> Self {
        let mut out = self.clone();
        let w = self.width as usize;
        for y in 0..self.height {
            let row = out.row_mut(y);
            for x in 0..w / 2 {
                let (a, b) = (x * 3, (w - 1 - x) * 3);
                for c in 0..3 {
                    row.swap(a + c, b + c);
                }
            }
        }
        out
    }
}

/// A 2:1 equirectangular panorama.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquirectImage(RgbImage);

impl EquirectImage {
    pub fn new(image: RgbImage) -> Result<Self> {
        if image.width == 0 || image.height == 0 {
            return Err(Error::ZeroDimension);
        }
        if image.width as u64 != 2 * image.height as u64 {
            return Err(Error::AspectRatio {
                width: image.width,
                height: image.height,
            });
        }
        Ok(Self(image))
    }

    pub fn width(&self) -> u32 {
        self.0.width
    }

    pub fn height(&self) -> u32 {
        self.0.height
    }

    pub fn image(&self) -> &RgbImage {
        &self.0
    }

    pub fn into_image(self) -> RgbImage {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equirect_requires_two_to_one() {
        assert!(EquirectImage::new(RgbImage::filled(8, 4, [0; 3])).is_ok());
        assert!(matches!(
            EquirectImage::new(RgbImage::filled(8, 5, [0; 3])),
            Err(Error::AspectRatio { .. })
        ));
        assert_eq!(
            EquirectImage::new(RgbImage::filled(0, 0, [0; 3])),
            Err(Error::ZeroDimension)
        );
    }

    #[test]
    fn from_raw_checks_length() {
        assert!(RgbImage::from_raw(2, 2, vec![0; 11]).is_err());
        assert!(RgbImage::from_raw(2, 2, vec![0; 12]).is_ok());
    }

    #[test]
    fn flip_is_an_involution() {
        let mut img = RgbImage::filled(5, 3, [1, 2, 3]);
        img.put(0, 1, [9, 9, 9]);
        let f = img.flipped_horizontal();
        assert_eq!(f.get(4, 1), [9, 9, 9]);
        assert_eq!(f.flipped_horizontal(), img);
    }
}
