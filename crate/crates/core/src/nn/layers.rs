//! Resampling, pooling, concatenation and normalisation on `[N, C, spatial…]`
//! tensors with one to three spatial axes.

use super::graph::{Graph, Var};
use super::Tensor;
use crate::error::{Error, Result};

/// `(N·C, [d, h, w])` with missing leading spatial axes set to 1.
fn split_dims(shape: &[usize], op: &str) -> Result<(usize, [usize; 3])> {
    if !(3..=5).contains(&shape.len()) {
        return Err(Error::shape(format!(
            "{op}: expected [N, C, 1 to 3 spatial dims], got {shape:?}"
        )));
    }
    let sp = &shape[2..];
    let mut s = [1; 3];
    s[3 - sp.len()..].copy_from_slice(sp);
    Ok((shape[0] * shape[1], s))
}

fn lift_factors(f: &[usize], shape: &[usize], op: &str) -> Result<[usize; 3]> {
    if f.len() != shape.len() - 2 || f.contains(&0) {
        return Err(Error::shape(format!(
            "{op}: factors {f:?} do not fit input {shape:?}"
        )));
    }
    let mut out = [1; 3];
    out[3 - f.len()..].copy_from_slice(f);
    Ok(out)
}

fn with_spatial(shape: &[usize], sp: [usize; 3]) -> Vec<usize> {
    let k = shape.len() - 2;
    let mut s = shape[..2].to_vec();
    s.extend_from_slice(&sp[3 - k..]);
    s
}

/// For pooling window `k`, calls `f(out_index, in_index)` for every pair,
/// visiting each window's inputs in increasing index order.
fn for_windows(planes: usize, inp: [usize; 3], k: [usize; 3], mut f: impl FnMut(usize, usize)) {
    let out = [inp[0] / k[0], inp[1] / k[1], inp[2] / k[2]];
    let (iv, ov) = (inp.iter().product::<usize>(), out.iter().product::<usize>());
    for p in 0..planes {
        for z in 0..out[0] {
            for y in 0..out[1] {
                for x in 0..out[2] {
                    let oi = p * ov + (z * out[1] + y) * out[2] + x;
                    for a in 0..k[0] {
                        for b in 0..k[1] {
                            for c in 0..k[2] {
                                let ii = p * iv
                                    + ((z * k[0] + a) * inp[1] + y * k[1] + b) * inp[2]
                                    + x * k[2]
                                    + c;
                                f(oi, ii);
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Graph {
    /// Nearest-neighbour upsampling by an integer factor per spatial axis.
    pub fn upsample_nearest(&mut self, a: Var, factors: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (planes, inp) = split_dims(&shape, "upsample_nearest")?;
        let f = lift_factors(factors, &shape, "upsample_nearest")?;
        let out_sp = [inp[0] * f[0], inp[1] * f[1], inp[2] * f[2]];
        let mut out = vec![0.0; planes * out_sp.iter().product::<usize>()];
        for_windows(planes, out_sp, f, |src, dst| {
            out[dst] = self.value(a).data()[src]
        });
        let out = Tensor::new(&with_spatial(&shape, out_sp), out)?;
        self.push(
            "upsample_nearest",
            out,
            &[a],
            Box::new(move |g, p, _, _| {
                let mut gin = vec![0.0; p[0].numel()];
                for_windows(planes, out_sp, f, |src, dst| gin[src] += g.data()[dst]);
                vec![Some(p[0].with_data(gin))]
            }),
        )
    }

    fn pool_output(
        &self,
        a: Var,
        k: &[usize],
        op: &str,
    ) -> Result<(Vec<usize>, usize, [usize; 3], [usize; 3])> {
        let shape = self.shape(a).to_vec();
        let (planes, inp) = split_dims(&shape, op)?;
        let k = lift_factors(k, &shape, op)?;
        if (0..3).any(|i| inp[i] % k[i] != 0) {
            return Err(Error::shape(format!(
                "{op}: input {shape:?} not divisible by window {k:?}"
            )));
        }
        let out_sp = [inp[0] / k[0], inp[1] / k[1], inp[2] / k[2]];
        Ok((with_spatial(&shape, out_sp), planes, inp, k))
    }

    /// Non-overlapping max pooling (window = stride). The gradient goes to the
    /// first maximal element of each window.
    pub fn maxpool(&mut self, a: Var, window: &[usize]) -> Result<Var> {
        let (out_shape, planes, inp, k) = self.pool_output(a, window, "maxpool")?;
        let n: usize = out_shape.iter().product();
        let x = self.value(a).data();
        let mut best = vec![f64::NEG_INFINITY; n];
        let mut arg = vec![0usize; n];
        for_windows(planes, inp, k, |o, i| {
            if x[i] > best[o] {
                best[o] = x[i];
                arg[o] = i;
            }
        });
        let out = Tensor::new(&out_shape, best)?;
        self.push(
            "maxpool",
            out,
            &[a],
            Box::new(move |g, p, _, _| {
                let mut gin = vec![0.0; p[0].numel()];
                for (o, &i) in arg.iter().enumerate() {
                    gin[i] += g.data()[o];
                }
                vec![Some(p[0].with_data(gin))]
            }),
        )
    }

    /// Non-overlapping average pooling (window = stride).
    pub fn avg_pool(&mut self, a: Var, window: &[usize]) -> Result<Var> {
        let (out_shape, planes, inp, k) = self.pool_output(a, window, "avg_pool")?;
        let inv = 1.0 / k.iter().product::<usize>() as f64;
        let x = self.value(a).data();
        let mut out = vec![0.0; out_shape.iter().product()];
        for_windows(planes, inp, k, |o, i| out[o] += x[i] * inv);
        let out = Tensor::new(&out_shape, out)?;
        self.push(
            "avg_pool",
            out,
            &[a],
            Box::new(move |g, p, _, _| {
                let mut gin = vec![0.0; p[0].numel()];
                for_windows(planes, inp, k, |o, i| gin[i] = g.data()[o] * inv);
                vec![Some(p[0].with_data(gin))]
            }),
        )
    }

    /// Concatenation along `axis`; all other dims must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::arg("concat of nothing"));
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape(format!(
                "concat axis {axis} out of range for {base:?}"
            )));
        }
        for &x in &xs[1..] {
            let s = self.shape(x);
            let ok = s.len() == base.len() && (0..s.len()).all(|i| i == axis || s[i] == base[i]);
            if !ok {
                return Err(Error::shape(format!(
                    "concat on axis {axis}: {base:?} vs {s:?}"
                )));
            }
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let lens: Vec<usize> = xs.iter().map(|&x| self.shape(x)[axis] * inner).collect();
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&x, &l) in xs.iter().zip(&lens) {
                data.extend_from_slice(&self.value(x).data()[o * l..(o + 1) * l]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total / inner;
        let out = Tensor::new(&shape, data)?;
        self.push(
            "concat",
            out,
            xs,
            Box::new(move |g, p, _, need| {
                let mut off = 0;
                lens.iter()
                    .zip(p)
                    .zip(need)
                    .map(|((&l, pt), &nd)| {
                        let start = off;
                        off += l;
                        nd.then(|| {
                            let mut d = Vec::with_capacity(outer * l);
                            for o in 0..outer {
                                d.extend_from_slice(
                                    &g.data()[o * total + start..o * total + start + l],
                                );
                            }
                            pt.with_data(d)
                        })
                    })
                    .collect()
            }),
        )
    }

    /// Per-sample, per-channel standardisation over the spatial axes.
    pub fn instance_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (planes, sp) = split_dims(&shape, "instance_norm")?;
        let m: usize = sp.iter().product();
        let x = self.value(a).data();
        let mut y = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; planes];
        for p in 0..planes {
            let xs = &x[p * m..(p + 1) * m];
            let mean = xs.iter().sum::<f64>() / m as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[p] = is;
            for (d, v) in y[p * m..(p + 1) * m].iter_mut().zip(xs) {
                *d = (v - mean) * is;
            }
        }
        let out = Tensor::new(&shape, y)?;
        self.push(
            "instance_norm",
            out,
            &[a],
            Box::new(move |g, p, out, _| {
                let (g, y) = (g.data(), out.data());
                let mut gin = vec![0.0; g.len()];
                for pl in 0..planes {
                    let r = pl * m..(pl + 1) * m;
                    let gm = g[r.clone()].iter().sum::<f64>() / m as f64;
                    let gym = g[r.clone()]
                        .iter()
                        .zip(&y[r.clone()])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / m as f64;
                    for i in r {
                        gin[i] = inv_std[pl] * (g[i] - gm - y[i] * gym);
                    }
                }
                vec![Some(p[0].with_data(gin))]
            }),
        )
    }
}
