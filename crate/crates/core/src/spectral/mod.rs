//! Grayscale conversion, 2-D Fourier magnitude, one-level Haar DWT and the
//! frequency-domain sharpness measure.

mod dft;
pub(crate) mod dwt;

use crate::error::{Error, Result};
use crate::image::Image;

pub use dft::{dft2_magnitude, fft2, fftshift_index, sharpness_fm, SpectrumImage};
pub use dwt::{dwt2_haar, dwt2_haar_raw, idwt2_haar, idwt2_haar_raw, DwtSubbands};

/// ITU-R BT.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::arg("gray image must have positive dimensions"));
        }
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "{} values do not fill {height}x{width}",
                data.len()
            )));
        }
        Ok(GrayImage {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        GrayImage {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn to_image(&self) -> Image {
        Image::from_planar(1, self.height, self.width, self.data.clone()).expect("consistent dims")
    }

    /// Min-max stretch to `[0, 1]` for display.
    pub fn normalized_for_display(&self) -> Image {
        let lo = self.data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let data = self.data.iter().map(|v| (v - lo) / span).collect();
        Image::from_planar(1, self.height, self.width, data).expect("consistent dims")
    }
}

pub fn to_grayscale(image: &Image) -> Result<GrayImage> {
    if image.channels != 3 {
        return Err(Error::arg(format!(
            "grayscale conversion needs 3 channels, got {}",
            image.channels
        )));
    }
    let n = image.height * image.width;
    let (r, g, b) = (image.plane(0), image.plane(1), image.plane(2));
    let data = (0..n)
        .map(|i| LUMA[0] * r[i] + LUMA[1] * g[i] + LUMA[2] * b[i])
        .collect();
    GrayImage::new(image.height, image.width, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_examples() {
        let white = Image::filled(3, 1, 1, 1.0);
        assert!((to_grayscale(&white).unwrap().data[0] - 1.0).abs() < 1e-15);
        let mut red = Image::zeros(3, 1, 1);
        red.set(0, 0, 0, 1.0);
        assert_eq!(to_grayscale(&red).unwrap().data[0], 0.299);
    }

    #[test]
    fn replicated_gray_is_unchanged() {
        let vals = [0.1, 0.5, 0.9, 0.33];
        let mut im = Image::zeros(3, 2, 2);
        for c in 0..3 {
            for (i, v) in vals.iter().enumerate() {
                im.set(c, i / 2, i % 2, *v);
            }
        }
        let g = to_grayscale(&im).unwrap();
        for (a, b) in g.data.iter().zip(vals) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        assert!(to_grayscale(&Image::zeros(1, 2, 2)).is_err());
    }
}
