//! Direct 2-D/3-D cross-correlation with stride and zero padding.
//!
//! All three passes walk the same list of contiguous row segments, so the
//! forward pass, the input gradient and the kernel gradient agree on which
//! taps exist. Each pass writes disjoint output chunks (one per output channel,
//! input channel or kernel), so parallel execution does not change the
//! summation order.

use super::graph::{Graph, Var};
use super::Tensor;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub o: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub out: [usize; 3],
}

/// Output positions `o` whose tap `o·s + k − p` lands inside `0..len`.
fn tap_range(k: usize, s: usize, p: usize, len: usize, out_len: usize) -> (usize, usize) {
    let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
    if len + p <= k {
        return (0, 0);
    }
    let hi = ((len - 1 + p - k) / s + 1).min(out_len);
    (lo.min(hi), hi)
}

impl ConvGeom {
    pub fn new(
        input: &[usize],
        kernel: &[usize],
        stride: &[usize],
        pad: &[usize],
    ) -> Result<ConvGeom> {
        let sp = input.len().saturating_sub(2);
        let bad =
            |why: &str| Error::shape(format!("conv: input {input:?} vs kernel {kernel:?}: {why}"));
        if !(2..=3).contains(&sp) || kernel.len() != input.len() {
            return Err(bad("expected matching ranks of 4 or 5"));
        }
        if stride.len() != sp || pad.len() != sp {
            return Err(bad("stride/padding rank"));
        }
        if kernel[1] != input[1] {
            return Err(bad("channel count differs"));
        }
        if stride.contains(&0) {
            return Err(Error::arg("conv stride must be at least 1"));
        }
        let lift = |v: &[usize], fill: usize| -> [usize; 3] {
            if v.len() == 3 {
                [v[0], v[1], v[2]]
            } else {
                [fill, v[0], v[1]]
            }
        };
        let (inp, k) = (lift(&input[2..], 1), lift(&kernel[2..], 1));
        let (s, p) = (lift(stride, 1), lift(pad, 0));
        let mut out = [0; 3];
        for a in 0..3 {
            if inp[a] + 2 * p[a] < k[a] {
                return Err(bad("kernel larger than padded input"));
            }
            out[a] = (inp[a] + 2 * p[a] - k[a]) / s[a] + 1;
        }
        Ok(ConvGeom {
            n: input[0],
            c: input[1],
            o: kernel[0],
            input: inp,
            kernel: k,
            stride: s,
            pad: p,
            out,
        })
    }

    pub fn in_vol(&self) -> usize {
        self.input.iter().product()
    }

    pub fn out_vol(&self) -> usize {
        self.out.iter().product()
    }

    pub fn k_vol(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Calls `f(kernel_index, out_offset, in_offset, count)` for every row
    /// segment; consecutive outputs step by 1 and inputs by `stride[2]`.
    #[inline]
    fn rows(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let [k0, k1, k2] = self.kernel;
        let [i0, i1, i2] = self.input;
        let [_, o1, o2] = self.out;
        let [s0, s1, s2] = self.stride;
        let [p0, p1, p2] = self.pad;
        for kd in 0..k0 {
            let (d0, d1) = tap_range(kd, s0, p0, i0, self.out[0]);
            for kh in 0..k1 {
                let (h0, h1) = tap_range(kh, s1, p1, i1, o1);
                for kw in 0..k2 {
                    let (w0, w1) = tap_range(kw, s2, p2, i2, o2);
                    if w1 <= w0 {
                        continue;
                    }
                    let kidx = (kd * k1 + kh) * k2 + kw;
                    for od in d0..d1 {
                        let id = od * s0 + kd - p0;
                        for oh in h0..h1 {
                            let ih = oh * s1 + kh - p1;
                            f(
                                kidx,
                                (od * o1 + oh) * o2 + w0,
                                (id * i1 + ih) * i2 + w0 * s2 + kw - p2,
                                w1 - w0,
                            );
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &[f64], w: &[f64], b: Option<&[f64]>) -> Vec<f64> {
        let (iv, ov, kv) = (self.in_vol(), self.out_vol(), self.k_vol());
        let s2 = self.stride[2];
        let mut out = vec![0.0; self.n * self.o * ov];
        par::for_each_chunk_mut(&mut out, ov, |idx, chunk| {
            let (n, o) = (idx / self.o, idx % self.o);
            if let Some(b) = b {
                chunk.fill(b[o]);
            }
            for c in 0..self.c {
                let xin = &x[(n * self.c + c) * iv..][..iv];
                let wk = &w[(o * self.c + c) * kv..][..kv];
                self.rows(|k, oo, io, cnt| {
                    let wv = wk[k];
                    let dst = &mut chunk[oo..oo + cnt];
                    if s2 == 1 {
                        for (d, s) in dst.iter_mut().zip(&xin[io..io + cnt]) {
                            *d += wv * s;
                        }
                    } else {
                        for (j, d) in dst.iter_mut().enumerate() {
                            *d += wv * xin[io + j * s2];
                        }
                    }
                });
            }
        });
        out
    }

    pub fn grad_input(&self, g: &[f64], w: &[f64]) -> Vec<f64> {
        let (iv, ov, kv) = (self.in_vol(), self.out_vol(), self.k_vol());
        let s2 = self.stride[2];
        let mut gin = vec![0.0; self.n * self.c * iv];
        par::for_each_chunk_mut(&mut gin, iv, |idx, chunk| {
            let (n, c) = (idx / self.c, idx % self.c);
            for o in 0..self.o {
                let go = &g[(n * self.o + o) * ov..][..ov];
                let wk = &w[(o * self.c + c) * kv..][..kv];
                self.rows(|k, oo, io, cnt| {
                    let wv = wk[k];
                    let src = &go[oo..oo + cnt];
                    if s2 == 1 {
                        for (d, s) in chunk[io..io + cnt].iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    } else {
                        for (j, s) in src.iter().enumerate() {
                            chunk[io + j * s2] += wv * s;
                        }
                    }
                });
            }
        });
        gin
    }

    pub fn grad_weight(&self, g: &[f64], x: &[f64]) -> Vec<f64> {
        let (iv, ov, kv) = (self.in_vol(), self.out_vol(), self.k_vol());
        let s2 = self.stride[2];
        let mut gw = vec![0.0; self.o * self.c * kv];
        par::for_each_chunk_mut(&mut gw, kv, |idx, chunk| {
            let (o, c) = (idx / self.c, idx % self.c);
            for n in 0..self.n {
                let go = &g[(n * self.o + o) * ov..][..ov];
                let xin = &x[(n * self.c + c) * iv..][..iv];
                self.rows(|k, oo, io, cnt| {
                    let src = &go[oo..oo + cnt];
                    let acc: f64 = if s2 == 1 {
                        src.iter().zip(&xin[io..io + cnt]).map(|(a, b)| a * b).sum()
                    } else {
                        src.iter()
                            .enumerate()
                            .map(|(j, a)| a * xin[io + j * s2])
                            .sum()
                    };
                    chunk[k] += acc;
                });
            }
        });
        gw
    }

    pub fn grad_bias(&self, g: &[f64]) -> Vec<f64> {
        let ov = self.out_vol();
        (0..self.o)
            .map(|o| {
                (0..self.n)
                    .map(|n| g[(n * self.o + o) * ov..][..ov].iter().sum::<f64>())
                    .sum()
            })
            .collect()
    }
}

impl Graph {
    /// Cross-correlation of `x` (`[N, C, (D,) H, W]`) with `w`
    /// (`[O, C, (KD,) KH, KW]`) plus an optional per-channel bias `[O]`.
    /// `stride` and `pad` have one entry per spatial axis.
    pub fn conv(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: &[usize],
        pad: &[usize],
    ) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let geom = ConvGeom::new(&xs, &ws, stride, pad)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.o] {
                return Err(Error::shape(format!(
                    "conv bias {:?} vs kernel {ws:?}",
                    self.shape(b)
                )));
            }
        }
        let out_data = geom.forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let mut out_shape = vec![geom.n, geom.o];
        out_shape.extend_from_slice(&geom.out[3 - (xs.len() - 2)..]);
        let out = Tensor::new(&out_shape, out_data)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(
            "conv",
            out,
            &parents,
            Box::new(move |g, p, _, need| {
                let mut grads = vec![
                    need[0].then(|| p[0].with_data(geom.grad_input(g.data(), p[1].data()))),
                    need[1].then(|| p[1].with_data(geom.grad_weight(g.data(), p[0].data()))),
                ];
                if p.len() == 3 {
                    grads.push(need[2].then(|| p[2].with_data(geom.grad_bias(g.data()))));
                }
                grads
            }),
        )
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: [usize; 2],
        pad: [usize; 2],
    ) -> Result<Var> {
        if self.shape(x).len() != 4 {
            return Err(Error::shape(format!(
                "conv2d needs N×C×H×W input, got {:?}",
                self.shape(x)
            )));
        }
        self.conv(x, w, b, &stride, &pad)
    }

    pub fn conv3d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Var> {
        if self.shape(x).len() != 5 {
            return Err(Error::shape(format!(
                "conv3d needs N×C×D×H×W input, got {:?}",
                self.shape(x)
            )));
        }
        self.conv(x, w, b, &stride, &pad)
    }
}
