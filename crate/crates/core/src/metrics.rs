//! PSNR, SSIM and sharpness reporting for rendered-vs-reference images.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::spectral::{sharpness_fm, to_grayscale, GrayImage};

/// PSNR reported for identical images (zero MSE).
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 8;
pub const METRICS_CSV_HEADER: &str = "psnr,ssim,sharp_gen,sharp_ref";

pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::shape(format!(
            "psnr: {}x{}x{} vs {}x{}x{}",
            a.channels, a.height, a.width, b.channels, b.height, b.width
        )));
    }
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    Ok(psnr_from_mse(mse, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
}

fn as_gray(im: &Image) -> Result<GrayImage> {
    match im.channels {
        1 => GrayImage::new(im.height, im.width, im.data.clone()),
        3 => to_grayscale(im),
        n => Err(Error::arg(format!("ssim: unsupported channel count {n}"))),
    }
}

/// Single-scale SSIM over all 8×8 windows (stride 1, uniform weights),
/// computed on luma for colour inputs, peak value 1.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::shape(format!(
            "ssim: {}x{}x{} vs {}x{}x{}",
            a.channels, a.height, a.width, b.channels, b.height, b.width
        )));
    }
    Ok(ssim_gray(&as_gray(a)?, &as_gray(b)?))
}

pub fn ssim_gray(a: &GrayImage, b: &GrayImage) -> f64 {
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let wh = SSIM_WINDOW.min(a.height);
    let ww = SSIM_WINDOW.min(a.width);
    let n = (wh * ww) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=a.height - wh {
        for x0 in 0..=a.width - ww {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + wh {
                for x in x0..x0 + ww {
                    let (p, q) = (a.get(y, x), b.get(y, x));
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = (saa / n - ma * ma).max(0.0);
            let vb = (sbb / n - mb * mb).max(0.0);
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

#[inline]
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable Gaussian blur with symmetric boundary; `sigma = 0` is the identity.
pub fn gaussian_blur(g: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return g.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (h, w) = (g.height, g.width);
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * g.data[y * w + reflect(x as i64 + i as i64 - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[reflect(y as i64 + i as i64 - r, h) * w + x])
                .sum();
        }
    }
    GrayImage {
        height: h,
        width: w,
        data: out,
    }
}

/// Channel-wise [`gaussian_blur`].
pub fn blur_image(im: &Image, sigma: f64) -> Image {
    let mut out = im.clone();
    let n = im.height * im.width;
    for c in 0..im.channels {
        let g = GrayImage {
            height: im.height,
            width: im.width,
            data: im.plane(c).to_vec(),
        };
        out.data[c * n..(c + 1) * n].copy_from_slice(&gaussian_blur(&g, sigma).data);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub sharpness_gen: f64,
    pub sharpness_ref: f64,
    /// Slot for an externally computed LPIPS score; never filled here.
    pub lpips: Option<f64>,
}

impl MetricReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.psnr, self.ssim, self.sharpness_gen, self.sharpness_ref
        )
    }
}

pub fn report(gen: &Image, reference: &Image) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr: psnr(gen, reference, 1.0)?,
        ssim: ssim(gen, reference)?,
        sharpness_gen: sharpness_fm(&as_gray(gen)?),
        sharpness_ref: sharpness_fm(&as_gray(reference)?),
        lpips: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_planar(c, h, w, (0..c * h * w).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = random_image(3, 8, 8, 1);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), 99.0);
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
        let mut b = Image::filled(3, 8, 8, 0.3);
        let c = Image::filled(3, 8, 8, 0.4);
        assert!((psnr(&b, &c, 1.0).unwrap() - 20.0).abs() < 1e-9);
        b.data[0] = 0.0;
        assert!(psnr(&b, &Image::zeros(3, 4, 4), 1.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_mse() {
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let p = psnr_from_mse(k as f64 * 0.003, 1.0);
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_examples() {
        let a = random_image(3, 16, 16, 2);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let z = Image::zeros(1, 16, 16);
        let o = Image::filled(1, 16, 16, 1.0);
        assert!(ssim(&z, &o).unwrap() < 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy = Image::from_planar(
            3,
            16,
            16,
            a.data
                .iter()
                .map(|v| v + 1e-4 * (rng.random::<f64>() - 0.5) * 3.46)
                .collect(),
        )
        .unwrap();
        assert!(ssim(&a, &noisy).unwrap() > 0.99);
    }

    #[test]
    fn ssim_and_psnr_are_symmetric() {
        let a = random_image(3, 12, 12, 4);
        let b = random_image(3, 12, 12, 5);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn ssim_tolerates_small_gain_change() {
        let a = random_image(1, 16, 16, 6);
        let b = blur_image(&a, 1.0);
        let s0 = ssim(&a, &b).unwrap();
        let scale = |im: &Image, k: f64| {
            Image::from_planar(1, 16, 16, im.data.iter().map(|v| v * k).collect()).unwrap()
        };
        let s1 = ssim(&scale(&a, 1.01), &scale(&b, 1.01)).unwrap();
        assert!((s0 - s1).abs() < 1e-3);
    }

    #[test]
    fn blur_preserves_constants_and_sigma_zero_is_identity() {
        let g = GrayImage::new(5, 7, vec![0.4; 35]).unwrap();
        let b = gaussian_blur(&g, 2.0);
        assert!(b.data.iter().all(|v| (v - 0.4).abs() < 1e-12));
        let r = random_image(1, 5, 5, 7);
        let rg = GrayImage::new(5, 5, r.data.clone()).unwrap();
        assert_eq!(gaussian_blur(&rg, 0.0), rg);
    }

    #[test]
    fn report_examples() {
        let a = random_image(3, 32, 32, 8);
        let r = report(&a, &a).unwrap();
        assert_eq!(r.psnr, PSNR_CAP);
        assert!((r.ssim - 1.0).abs() < 1e-12);
        assert_eq!(r.sharpness_gen, r.sharpness_ref);
        let blurred = blur_image(&a, 2.0);
        let r = report(&blurred, &a).unwrap();
        assert!(r.sharpness_gen < r.sharpness_ref);
        let swapped = report(&a, &blurred).unwrap();
        assert_eq!(r.psnr, swapped.psnr);
        assert_eq!(r.ssim, swapped.ssim);
    }
}
