//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over the inputs.
    pub max_rel_error: f64,
    pub entries_checked: usize,
}

/// Compares backpropagated gradients of `Σ r ⊙ f(inputs)` (with a fixed random
/// projection `r`) against central differences of step `step`, for every
/// entry of every input.
pub fn gradcheck<F>(inputs: &[Tensor], f: F, step: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut proj: Option<Tensor> = None;
    let mut eval = |xs: &[Tensor], want_grad: bool| -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let r = proj
            .get_or_insert_with(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let shape = g.shape(out).to_vec();
                let n = shape.iter().product();
                Tensor::new(
                    &shape,
                    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
                .expect("shape")
            })
            .clone();
        let rv = g.leaf(r);
        let prod = g.mul(out, rv)?;
        let loss = g.sum(prod)?;
        let value = g.value(loss).item();
        if !want_grad {
            return Ok((value, Vec::new()));
        }
        let grads = g.backward(loss)?;
        let gs = vars
            .iter()
            .zip(xs)
            .map(|(&v, t)| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape()))
            })
            .collect();
        Ok((value, gs))
    };
    let (_, analytic) = eval(inputs, true)?;
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut xs = inputs.to_vec();
    for (i, an) in analytic.iter().enumerate() {
        let mut num = vec![0.0; xs[i].numel()];
        for (j, slot) in num.iter_mut().enumerate() {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + step;
            let (fp, _) = eval(&xs, false)?;
            xs[i].data_mut()[j] = orig - step;
            let (fm, _) = eval(&xs, false)?;
            xs[i].data_mut()[j] = orig;
            *slot = (fp - fm) / (2.0 * step);
        }
        count += num.len();
        let diff = an
            .data()
            .iter()
            .zip(&num)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let na = an.data().iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = num.iter().map(|a| a * a).sum::<f64>().sqrt();
        let denom = na.max(nn);
        let rel = if denom < 1e-12 { diff } else { diff / denom };
        if !rel.is_finite() {
            return Err(Error::NonFinite(format!("gradcheck input {i}")));
        }
        worst = worst.max(rel);
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        entries_checked: count,
    })
}
