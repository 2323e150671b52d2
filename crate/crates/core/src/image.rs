//! Planar float images and 8-bit PNG I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// A `channels × height × width` image stored planar (channel-major), values
/// nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_planar(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "planar data of length {} does not fit {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Window `[y0, y0+h) × [x0, x0+w)` across all channels.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Image> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::arg(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut out = Image::zeros(self.channels, h, w);
        for c in 0..self.channels {
            for y in 0..h {
                let src = self.index(c, y0 + y, x0);
                let dst = out.index(c, y, 0);
                out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
            }
        }
        Ok(out)
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let img = ::image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let (w, h) = (w as usize, h as usize);
        let mut out = Image::zeros(3, h, w);
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, px[c] as f64 / 255.0);
            }
        }
        Ok(out)
    }

    /// Writes an 8-bit PNG; 1-channel images become grayscale, values are
    /// clamped to `[0, 1]` and rounded.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        match self.channels {
            1 => {
                let buf: Vec<u8> = self.data.iter().map(|&v| q(v)).collect();
                let img = ::image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
                    .ok_or_else(|| Error::Format("gray buffer size".into()))?;
                img.save(path)?;
            }
            3 => {
                let mut buf = Vec::with_capacity(self.height * self.width * 3);
                for y in 0..self.height {
                    for x in 0..self.width {
                        for c in 0..3 {
                            buf.push(q(self.get(c, y, x)));
                        }
                    }
                }
                let img = ::image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
                    .ok_or_else(|| Error::Format("rgb buffer size".into()))?;
                img.save(path)?;
            }
            n => return Err(Error::arg(format!("cannot write {n}-channel image as PNG"))),
        }
        Ok(())
    }

    /// Places images side by side (all must share channels and height).
    pub fn hstack(images: &[&Image]) -> Result<Image> {
        let first = images
            .first()
            .ok_or_else(|| Error::arg("hstack of zero images"))?;
        let (c, h) = (first.channels, first.height);
        if images.iter().any(|im| im.channels != c || im.height != h) {
            return Err(Error::shape("hstack needs equal channels and height"));
        }
        let w: usize = images.iter().map(|im| im.width).sum();
        let mut out = Image::zeros(c, h, w);
        let mut x0 = 0;
        for im in images {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..im.width {
                        out.set(ch, y, x0 + x, im.get(ch, y, x));
                    }
                }
            }
            x0 += im.width;
        }
        Ok(out)
    }
}
