//! One-level orthonormal 2-D Haar transform.
//!
//! For each 2×2 block `[a b; c d]` (row-major), with `1/2 = (1/√2)²`:
//!
//! ```text
//! LL = (a + b + c + d) / 2
//! HL = (a − b + c − d) / 2   high-pass along x: vertical detail
//! LH = (a + b − c − d) / 2   high-pass along y: horizontal detail
//! HH = (a − b − c + d) / 2   diagonal detail
//! ```
//!
//! Odd dimensions are padded by replicating the last row/column.

use super::GrayImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DwtSubbands {
    /// Subband size, half the (padded) input size.
    pub height: usize,
    pub width: usize,
    pub ll: Vec<f64>,
    pub hl: Vec<f64>,
    pub lh: Vec<f64>,
    pub hh: Vec<f64>,
    /// Unpadded input size; the inverse crops back to it.
    pub source_height: usize,
    pub source_width: usize,
}

impl DwtSubbands {
    pub fn zeros(height: usize, width: usize) -> Self {
        let n = height * width;
        DwtSubbands {
            height,
            width,
            ll: vec![0.0; n],
            hl: vec![0.0; n],
            lh: vec![0.0; n],
            hh: vec![0.0; n],
            source_height: 2 * height,
            source_width: 2 * width,
        }
    }

    pub fn energy(&self) -> f64 {
        [&self.ll, &self.hl, &self.lh, &self.hh]
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum()
    }
}

/// Haar analysis of an `h × w` row-major array with even `h`, `w`.
/// Returns `[ll, hl, lh, hh]`, each `(h/2) × (w/2)`.
pub fn dwt2_haar_raw(x: &[f64], h: usize, w: usize) -> [Vec<f64>; 4] {
    debug_assert!(h.is_multiple_of(2) && w.is_multiple_of(2) && x.len() == h * w);
    let (hh_, hw) = (h / 2, w / 2);
    let mut out = [
        vec![0.0; hh_ * hw],
        vec![0.0; hh_ * hw],
        vec![0.0; hh_ * hw],
        vec![0.0; hh_ * hw],
    ];
    for i in 0..hh_ {
        for j in 0..hw {
            let a = x[(2 * i) * w + 2 * j];
            let b = x[(2 * i) * w + 2 * j + 1];
            let c = x[(2 * i + 1) * w + 2 * j];
            let d = x[(2 * i + 1) * w + 2 * j + 1];
            let k = i * hw + j;
            out[0][k] = 0.5 * (a + b + c + d);
            out[1][k] = 0.5 * (a - b + c - d);
            out[2][k] = 0.5 * (a + b - c - d);
            out[3][k] = 0.5 * (a - b - c + d);
        }
    }
    out
}

/// Haar synthesis; the exact inverse (and, being orthonormal, the adjoint) of
/// [`dwt2_haar_raw`]. Output is `2·bh × 2·bw`.
pub fn idwt2_haar_raw(bands: [&[f64]; 4], bh: usize, bw: usize) -> Vec<f64> {
    let w = 2 * bw;
    let mut x = vec![0.0; 4 * bh * bw];
    for i in 0..bh {
        for j in 0..bw {
            let k = i * bw + j;
            let (ll, hl, lh, hh) = (bands[0][k], bands[1][k], bands[2][k], bands[3][k]);
            x[(2 * i) * w + 2 * j] = 0.5 * (ll + hl + lh + hh);
            x[(2 * i) * w + 2 * j + 1] = 0.5 * (ll - hl + lh - hh);
            x[(2 * i + 1) * w + 2 * j] = 0.5 * (ll + hl - lh - hh);
            x[(2 * i + 1) * w + 2 * j + 1] = 0.5 * (ll - hl - lh + hh);
        }
    }
    x
}

/// Edge-replicates `x` (`h × w`) up to even dimensions.
pub(crate) fn pad_even(x: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (ph, pw) = (h + h % 2, w + w % 2);
    if (ph, pw) == (h, w) {
        return (x.to_vec(), h, w);
    }
    let mut out = vec![0.0; ph * pw];
    for y in 0..ph {
        for xx in 0..pw {
            out[y * pw + xx] = x[y.min(h - 1) * w + xx.min(w - 1)];
        }
    }
    (out, ph, pw)
}

pub fn dwt2_haar(gray: &GrayImage) -> DwtSubbands {
    let (x, ph, pw) = pad_even(&gray.data, gray.height, gray.width);
    let [ll, hl, lh, hh] = dwt2_haar_raw(&x, ph, pw);
    DwtSubbands {
        height: ph / 2,
        width: pw / 2,
        ll,
        hl,
        lh,
        hh,
        source_height: gray.height,
        source_width: gray.width,
    }
}

pub fn idwt2_haar(bands: &DwtSubbands) -> Result<GrayImage> {
    let n = bands.height * bands.width;
    if [&bands.ll, &bands.hl, &bands.lh, &bands.hh]
        .iter()
        .any(|b| b.len() != n)
    {
        return Err(Error::shape(format!(
            "subbands must all be {}x{} (lengths {}, {}, {}, {})",
            bands.height,
            bands.width,
            bands.ll.len(),
            bands.hl.len(),
            bands.lh.len(),
            bands.hh.len()
        )));
    }
    let (sh, sw) = (bands.source_height, bands.source_width);
    if sh > 2 * bands.height
        || sw > 2 * bands.width
        || sh + 1 < 2 * bands.height
        || sw + 1 < 2 * bands.width
    {
        return Err(Error::shape(format!(
            "source size {sh}x{sw} inconsistent with {}x{} subbands",
            bands.height, bands.width
        )));
    }
    let full = idwt2_haar_raw(
        [&bands.ll, &bands.hl, &bands.lh, &bands.hh],
        bands.height,
        bands.width,
    );
    let pw = 2 * bands.width;
    let mut data = Vec::with_capacity(sh * sw);
    for y in 0..sh {
        data.extend_from_slice(&full[y * pw..y * pw + sw]);
    }
    GrayImage::new(sh, sw, data)
}
