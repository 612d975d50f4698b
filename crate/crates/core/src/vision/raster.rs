//! In-memory RGB raster. Descriptors need at least one 8x8 block, so images
//! below 8x8 are rejected at construction rather than padded.

use crate::error::{Error, Result};

/// Minimum width and height accepted by the descriptors.
pub const MIN_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    /// Interleaved RGB, row-major, 3 bytes per pixel.
    data: Vec<u8>,
}

impl RasterImage {
    pub fn from_rgb8(width: usize, height: usize, data: Vec<u8>) -> Result<RasterImage> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::Dimension(format!(
                "image {width}x{height} below the {MIN_SIDE}x{MIN_SIDE} descriptor minimum"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Dimension(format!(
                "pixel buffer holds {} bytes, expected {} for {width}x{height} RGB",
                data.len(),
                width * height * 3
            )));
        }
        Ok(RasterImage {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating a pixel function at every coordinate.
    pub fn from_fn<F>(width: usize, height: usize, mut f: F) -> Result<RasterImage>
    where
        F: FnMut(usize, usize) -> [u8; 3],
    {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RasterImage::from_rgb8(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Row-major luminance plane (BT.601 weights, range [0, 255]).
    pub fn luminance(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let [r, g, b] = self.pixel(x, y);
                out.push(0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64);
            }
        }
        out
    }

    /// Copy with the row order reversed. Flipping twice restores the
    /// original; used to check that descriptors do not depend on a storage
    /// convention accident.
    pub fn flip_rows(&self) -> RasterImage {
        let mut data = Vec::with_capacity(self.data.len());
        for y in (0..self.height).rev() {
            let start = y * self.width * 3;
            data.extend_from_slice(&self.data[start..start + self.width * 3]);
        }
        RasterImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}
