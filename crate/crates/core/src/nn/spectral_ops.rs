//! Differentiable versions of the spectral transforms, used to feed the
//! Fourier and wavelet discriminators from the generator output.

use rustfft::num_complex::Complex64;

use super::graph::{Graph, Var};
use super::Tensor;
use crate::error::{Error, Result};
use crate::spectral::dwt::{dwt2_haar_raw, idwt2_haar_raw, pad_even};
use crate::spectral::{fft2, fftshift_index, LUMA};

fn image_dims(shape: &[usize], op: &str) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::shape(format!(
            "{op}: expected [N, C, H, W], got {shape:?}"
        ))),
    }
}

impl Graph {
    /// Luma of a `[N, 3, H, W]` tensor, giving `[N, 1, H, W]`.
    pub fn grayscale(&mut self, a: Var) -> Result<Var> {
        let (n, c, h, w) = image_dims(self.shape(a), "grayscale")?;
        if c != 3 {
            return Err(Error::shape(format!(
                "grayscale needs 3 channels, got {:?}",
                self.shape(a)
            )));
        }
        let m = h * w;
        let x = self.value(a).data();
        let mut out = vec![0.0; n * m];
        for s in 0..n {
            for i in 0..m {
                out[s * m + i] = (0..3).map(|k| LUMA[k] * x[(s * 3 + k) * m + i]).sum();
            }
        }
        let out = Tensor::new(&[n, 1, h, w], out)?;
        self.push(
            "grayscale",
            out,
            &[a],
            Box::new(move |g, p, _, _| {
                let mut gin = vec![0.0; p[0].numel()];
                for s in 0..n {
                    for k in 0..3 {
                        for i in 0..m {
                            gin[(s * 3 + k) * m + i] = LUMA[k] * g.data()[s * m + i];
                        }
                    }
                }
                vec![Some(p[0].with_data(gin))]
            }),
        )
    }

    /// Centre-shifted magnitude of the unnormalised 2-D DFT of every plane.
    /// Not differentiable where a bin is exactly zero; the gradient there is
    /// taken as 0.
    pub fn fft_magnitude(&mut self, a: Var) -> Result<Var> {
        let (n, c, h, w) = image_dims(self.shape(a), "fft_magnitude")?;
        let m = h * w;
        let x = self.value(a).data();
        let mut out = vec![0.0; n * c * m];
        let mut spectra = Vec::with_capacity(n * c);
        for pl in 0..n * c {
            let z: Vec<Complex64> = x[pl * m..(pl + 1) * m]
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect();
            let f = fft2(&z, h, w, false);
            for u in 0..h {
                for v in 0..w {
                    out[pl * m + fftshift_index(u, h) * w + fftshift_index(v, w)] =
                        f[u * w + v].norm();
                }
            }
            spectra.push(f);
        }
        let out = Tensor::new(&[n, c, h, w], out)?;
        self.push(
            "fft_magnitude",
            out,
            &[a],
            Box::new(move |g, p, _, _| {
                let mut gin = vec![0.0; p[0].numel()];
                for (pl, f) in spectra.iter().enumerate() {
                    let mut z = vec![Complex64::new(0.0, 0.0); m];
                    for u in 0..h {
                        for v in 0..w {
                            let fk = f[u * w + v];
                            let mag = fk.norm();
                            if mag > 0.0 {
                                let gk = g.data()
                                    [pl * m + fftshift_index(u, h) * w + fftshift_index(v, w)];
                                z[u * w + v] = fk * (gk / mag);
                            }
                        }
                    }
                    let back = fft2(&z, h, w, true);
                    for (d, s) in gin[pl * m..(pl + 1) * m].iter_mut().zip(&back) {
                        *d = s.re;
                    }
                }
                vec![Some(p[0].with_data(gin))]
            }),
        )
    }

    /// Maps every `[n, c]` plane affinely onto `[0, 1]`. A constant plane maps
    /// to zeros. The gradient flows through the plane's min and max (first
    /// occurrence).
    pub fn minmax_normalize(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() < 3 {
            return Err(Error::shape(format!(
                "minmax_normalize: expected [N, C, …], got {shape:?}"
            )));
        }
        let planes = shape[0] * shape[1];
        let m: usize = shape[2..].iter().product();
        let x = self.value(a).data();
        let mut y = vec![0.0; x.len()];
        let mut stats = Vec::with_capacity(planes);
        for p in 0..planes {
            let xs = &x[p * m..(p + 1) * m];
            let (mut lo, mut hi) = (0, 0);
            for (i, &v) in xs.iter().enumerate() {
                if v < xs[lo] {
                    lo = i;
                }
                if v > xs[hi] {
                    hi = i;
                }
            }
            let span = xs[hi] - xs[lo];
            if span > 0.0 {
                for (d, v) in y[p * m..(p + 1) * m].iter_mut().zip(xs) {
                    *d = (v - xs[lo]) / span;
                }
            }
            stats.push((lo, hi, span));
        }
        let out = Tensor::new(&shape, y)?;
        self.push(
            "minmax_normalize",
            out,
            &[a],
            Box::new(move |g, p, out, _| {
                let (g, y) = (g.data(), out.data());
                let mut gin = vec![0.0; g.len()];
                for (pl, &(lo, hi, span)) in stats.iter().enumerate() {
                    if span <= 0.0 {
                        continue;
                    }
                    let r = pl * m..(pl + 1) * m;
                    let mut to_min = 0.0;
                    let mut to_max = 0.0;
                    for i in r.clone() {
                        gin[i] = g[i] / span;
                        to_min += g[i] * (y[i] - 1.0) / span;
                        to_max -= g[i] * y[i] / span;
                    }
                    gin[pl * m + lo] += to_min;
                    gin[pl * m + hi] += to_max;
                }
                vec![Some(p[0].with_data(gin))]
            }),
        )
    }

    /// One-level Haar detail bands of every plane of `[N, C, H, W]`, giving
    /// `[N, 3C, ⌈H/2⌉, ⌈W/2⌉]` with channels `HL, LH, HH` per input channel.
    /// Odd sizes are edge-replicated first.
    pub fn dwt_detail(&mut self, a: Var) -> Result<Var> {
        let (n, c, h, w) = image_dims(self.shape(a), "dwt_detail")?;
        let (bh, bw) = (h.div_ceil(2), w.div_ceil(2));
        let (m, bm) = (h * w, bh * bw);
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(n * c * 3 * bm);
        for pl in 0..n * c {
            let (padded, ph, pw) = pad_even(&x[pl * m..(pl + 1) * m], h, w);
            let [_, hl, lh, hh] = dwt2_haar_raw(&padded, ph, pw);
            out.extend(hl);
            out.extend(lh);
            out.extend(hh);
        }
        let out = Tensor::new(&[n, 3 * c, bh, bw], out)?;
        self.push(
            "dwt_detail",
            out,
            &[a],
            Box::new(move |g, p, _, _| {
                let zero = vec![0.0; bm];
                let mut gin = vec![0.0; p[0].numel()];
                for pl in 0..n * c {
                    let gb = &g.data()[pl * 3 * bm..(pl + 1) * 3 * bm];
                    let full =
                        idwt2_haar_raw([&zero, &gb[..bm], &gb[bm..2 * bm], &gb[2 * bm..]], bh, bw);
                    let pw = 2 * bw;
                    for y in 0..2 * bh {
                        for xx in 0..pw {
                            gin[pl * m + y.min(h - 1) * w + xx.min(w - 1)] += full[y * pw + xx];
                        }
                    }
                }
                vec![Some(p[0].with_data(gin))]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{dft2_magnitude, dwt2_haar, GrayImage};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn fft_magnitude_matches_spectral_module() {
        let t = random(&[1, 1, 6, 10], 1);
        let mut g = Graph::new();
        let x = g.leaf(t.clone());
        let y = g.fft_magnitude(x).unwrap();
        let reference = dft2_magnitude(&GrayImage::new(6, 10, t.data().to_vec()).unwrap()).unwrap();
        assert_eq!(g.value(y).data(), &reference.magnitude[..]);
    }

    #[test]
    fn dwt_detail_matches_spectral_module() {
        let t = random(&[1, 1, 7, 9], 2);
        let mut g = Graph::new();
        let x = g.leaf(t.clone());
        let y = g.dwt_detail(x).unwrap();
        assert_eq!(g.shape(y), &[1, 3, 4, 5]);
        let b = dwt2_haar(&GrayImage::new(7, 9, t.data().to_vec()).unwrap());
        let expected: Vec<f64> = [b.hl, b.lh, b.hh].concat();
        assert_eq!(g.value(y).data(), &expected[..]);
    }

    #[test]
    fn minmax_maps_to_unit_range() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(&[1, 2, 3], vec![2.0, 4.0, 3.0, 1.0, 1.0, 1.0]).unwrap());
        let y = g.minmax_normalize(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 1.0, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn grayscale_weights() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(&[1, 3, 1, 1], vec![1.0, 0.0, 0.0]).unwrap());
        let y = g.grayscale(x).unwrap();
        assert_eq!(g.value(y).data(), &[LUMA[0]]);
    }
}
