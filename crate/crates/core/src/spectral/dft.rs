use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::GrayImage;
use crate::error::{Error, Result};
use crate::par;

/// Centre-shifted `|F(u, v)|` of the unnormalised 2-D DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumImage {
    pub height: usize,
    pub width: usize,
    pub magnitude: Vec<f64>,
}

impl SpectrumImage {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            height: self.height,
            width: self.width,
            data: self.magnitude.clone(),
        }
    }
}

/// Position of frequency index `k` after the centre shift (zero frequency at `n / 2`).
#[inline]
pub fn fftshift_index(k: usize, n: usize) -> usize {
    (k + n / 2) % n
}

/// Row-major 2-D FFT of an `h × w` complex array. The inverse is unnormalised
/// as well, so `fft2(fft2(x), inverse) = h·w·x`.
pub fn fft2(data: &[Complex64], h: usize, w: usize, inverse: bool) -> Vec<Complex64> {
    assert_eq!(data.len(), h * w, "fft2 input length");
    let mut planner = FftPlanner::new();
    let (row_plan, col_plan) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    let mut buf = data.to_vec();
    par::for_each_chunk_mut(&mut buf, w, |_, row| row_plan.process(row));
    let mut t = vec![Complex64::new(0.0, 0.0); h * w];
    for y in 0..h {
        for x in 0..w {
            t[x * h + y] = buf[y * w + x];
        }
    }
    par::for_each_chunk_mut(&mut t, h, |_, col| col_plan.process(col));
    for y in 0..h {
        for x in 0..w {
            buf[y * w + x] = t[x * h + y];
        }
    }
    buf
}

pub(crate) fn real_fft2(data: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let c: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&c, h, w, false)
}

pub fn dft2_magnitude(gray: &GrayImage) -> Result<SpectrumImage> {
    let (h, w) = (gray.height, gray.width);
    if h < 2 || w < 2 {
        return Err(Error::arg(format!("DFT needs at least 2x2, got {h}x{w}")));
    }
    let f = real_fft2(&gray.data, h, w);
    let mut magnitude = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            magnitude[fftshift_index(u, h) * w + fftshift_index(v, w)] = f[u * w + v].norm();
        }
    }
    Ok(SpectrumImage {
        height: h,
        width: w,
        magnitude,
    })
}

/// Fraction of DFT bins whose magnitude exceeds one thousandth of the peak
/// magnitude. Zero for an all-zero image.
pub fn sharpness_fm(gray: &GrayImage) -> f64 {
    let f = real_fft2(&gray.data, gray.height, gray.width);
    let peak = f.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let threshold = peak / 1000.0;
    let count = f.iter().filter(|c| c.norm() > threshold).count();
    count as f64 / (gray.height * gray.width) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::gaussian_blur;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gray(h: usize, w: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::new(h, w, (0..h * w).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn constant_image_has_single_centred_bin() {
        let g = GrayImage::new(6, 8, vec![0.25; 48]).unwrap();
        let s = dft2_magnitude(&g).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                let v = s.get(y, x);
                if (y, x) == (3, 4) {
                    assert!((v - 0.25 * 48.0).abs() < 1e-12);
                } else {
                    assert!(v < 1e-12);
                }
            }
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut g = GrayImage::zeros(5, 7);
        g.data[0] = 1.0;
        let s = dft2_magnitude(&g).unwrap();
        assert!(s.magnitude.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn matches_naive_dft() {
        let g = random_gray(16, 16, 1);
        let s = dft2_magnitude(&g).unwrap();
        let naive = naive_dft_mag(&g);
        for (a, b) in s.magnitude.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn naive_dft_mag(g: &GrayImage) -> Vec<f64> {
        let (h, w) = (g.height, g.width);
        let mut out = vec![0.0; h * w];
        for u in 0..h {
            for v in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let a = -2.0
                            * std::f64::consts::PI
                            * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                        re += g.get(y, x) * a.cos();
                        im += g.get(y, x) * a.sin();
                    }
                }
                out[((u + h / 2) % h) * w + (v + w / 2) % w] = (re * re + im * im).sqrt();
            }
        }
        out
    }

    #[test]
    fn parseval_and_circular_shift() {
        let g = random_gray(12, 10, 2);
        let s = dft2_magnitude(&g).unwrap();
        let e_freq: f64 = s.magnitude.iter().map(|m| m * m).sum();
        let e_space: f64 = g.data.iter().map(|v| v * v).sum();
        assert!((e_freq - 120.0 * e_space).abs() / e_freq < 1e-12);
        let mut shifted = GrayImage::zeros(12, 10);
        for y in 0..12 {
            for x in 0..10 {
                shifted.data[((y + 5) % 12) * 10 + (x + 3) % 10] = g.get(y, x);
            }
        }
        let s2 = dft2_magnitude(&shifted).unwrap();
        for (a, b) in s.magnitude.iter().zip(&s2.magnitude) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn magnitude_is_point_symmetric_about_centre() {
        let g = random_gray(8, 10, 3);
        let s = dft2_magnitude(&g).unwrap();
        let (h, w) = (8, 10);
        for y in 0..h {
            for x in 0..w {
                let my = (2 * (h / 2) + h - y) % h;
                let mx = (2 * (w / 2) + w - x) % w;
                assert!((s.get(y, x) - s.get(my, mx)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn scaling_input_scales_magnitude() {
        let g = random_gray(8, 8, 4);
        let scaled = GrayImage::new(8, 8, g.data.iter().map(|v| -2.5 * v).collect()).unwrap();
        let (a, b) = (
            dft2_magnitude(&g).unwrap(),
            dft2_magnitude(&scaled).unwrap(),
        );
        for (x, y) in a.magnitude.iter().zip(&b.magnitude) {
            assert!((2.5 * x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_fft_recovers_input() {
        let g = random_gray(6, 9, 5);
        let f = real_fft2(&g.data, 6, 9);
        let back = fft2(&f, 6, 9, true);
        for (a, b) in back.iter().zip(&g.data) {
            assert!((a.re / 54.0 - b).abs() < 1e-12 && a.im.abs() < 1e-9);
        }
    }

    #[test]
    fn sharpness_examples() {
        let c = GrayImage::new(8, 8, vec![0.7; 64]).unwrap();
        assert_eq!(sharpness_fm(&c), 1.0 / 64.0);
        assert_eq!(sharpness_fm(&GrayImage::zeros(4, 4)), 0.0);
        let noise = random_gray(64, 64, 6);
        assert!(sharpness_fm(&noise) > 0.9);
        let blurred = gaussian_blur(&noise, 1.0);
        assert!(sharpness_fm(&noise) > sharpness_fm(&blurred));
    }

    #[test]
    fn tiny_images_are_rejected() {
        assert!(dft2_magnitude(&GrayImage::zeros(1, 4)).is_err());
    }
}
