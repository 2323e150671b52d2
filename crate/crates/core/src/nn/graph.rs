//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value, its parents and
//! a closure mapping the output gradient to parent gradients. Nodes are stored
//! in execution order, which is already a topological order, so `backward`
//! is a single reverse sweep that visits each node once.

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// `(grad_out, parent values, output value, which parents need a gradient)`.
pub(crate) type BackwardFn =
    Box<dyn Fn(&Tensor, &[&Tensor], &Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    op: &'static str,
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn leaf_node(&mut self, value: Tensor, requires_grad: bool, op: &'static str) -> Var {
        self.nodes.push(Node {
            op,
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; never receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.leaf_node(value, false, "leaf")
    }

    /// A trainable input; `backward` reports its gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf_node(value, true, "param")
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copies the value of `v` into a new constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.leaf_node(value, false, "detach")
    }

    pub(crate) fn push(
        &mut self,
        op: &'static str,
        value: Tensor,
        parents: &[Var],
        backward: BackwardFn,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("output of {op}")));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            parents: parents.iter().map(|p| p.0).collect(),
            backward: requires_grad.then_some(backward),
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Gradients of the one-element `loss` with respect to every node that
    /// depends on a parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !root.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::filled(root.value.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = &node.backward else {
                continue;
            };
            let Some(g) = grads[i].take() else { continue };
            let parents: Vec<&Tensor> =
                node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| self.nodes[p].requires_grad)
                .collect();
            let pg = backward(&g, &parents, &node.value, &needs);
            for ((&p, need), pg) in node.parents.iter().zip(&needs).zip(pg) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                if !pg.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "gradient flowing out of {}",
                        node.op
                    )));
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn check_same(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    t.with_data(t.data().iter().map(|&v| f(v)).collect())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    a.with_data(
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

impl Graph {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("add", self.value(a), self.value(b))?;
        let out = zip(self.value(a), self.value(b), |x, y| x + y);
        self.push(
            "add",
            out,
            &[a, b],
            Box::new(|g, _, _, _| vec![Some(g.clone()), Some(g.clone())]),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("sub", self.value(a), self.value(b))?;
        let out = zip(self.value(a), self.value(b), |x, y| x - y);
        self.push(
            "sub",
            out,
            &[a, b],
            Box::new(|g, _, _, _| vec![Some(g.clone()), Some(map(g, |v| -v))]),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("mul", self.value(a), self.value(b))?;
        let out = zip(self.value(a), self.value(b), |x, y| x * y);
        self.push(
            "mul",
            out,
            &[a, b],
            Box::new(|g, p, _, need| {
                vec![
                    need[0].then(|| zip(g, p[1], |g, y| g * y)),
                    need[1].then(|| zip(g, p[0], |g, x| g * x)),
                ]
            }),
        )
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = map(self.value(a), |x| k * x);
        self.push(
            "scale",
            out,
            &[a],
            Box::new(move |g, _, _, _| vec![Some(map(g, |v| k * v))]),
        )
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = map(self.value(a), |x| x + k);
        self.push(
            "add_scalar",
            out,
            &[a],
            Box::new(|g, _, _, _| vec![Some(g.clone())]),
        )
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(
            "sum",
            out,
            &[a],
            Box::new(|g, p, _, _| vec![Some(Tensor::filled(p[0].shape(), g.item()))]),
        )
    }

    /// Sum of several `[1]` tensors, added in argument order.
    pub fn sum_scalars(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Ok(self.leaf(Tensor::scalar(0.0)));
        }
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = self.add(acc, x)?;
        }
        Ok(acc)
    }

    /// `Σ |a − b|`; the subgradient at zero difference is 0.
    pub fn l1_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("l1_distance", self.value(a), self.value(b))?;
        let s = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y).abs())
            .sum();
        self.push(
            "l1_distance",
            Tensor::scalar(s),
            &[a, b],
            Box::new(|g, p, _, need| {
                let gv = g.item();
                let sign = zip(p[0], p[1], |x, y| gv * sign0(x - y));
                vec![
                    need[0].then(|| sign.clone()),
                    need[1].then(|| map(&sign, |v| -v)),
                ]
            }),
        )
    }

    /// `Σ (a − target)²`.
    pub fn sq_dev_sum(&mut self, a: Var, target: f64) -> Result<Var> {
        let s = self
            .value(a)
            .data()
            .iter()
            .map(|x| (x - target) * (x - target))
            .sum();
        self.push(
            "sq_dev_sum",
            Tensor::scalar(s),
            &[a],
            Box::new(move |g, p, _, _| {
                let gv = g.item();
                vec![Some(map(p[0], |x| 2.0 * gv * (x - target)))]
            }),
        )
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let out = map(self.value(a), |x| if x > 0.0 { x } else { slope * x });
        self.push(
            "leaky_relu",
            out,
            &[a],
            Box::new(move |g, p, _, _| {
                vec![Some(zip(
                    g,
                    p[0],
                    |g, x| if x > 0.0 { g } else { slope * g },
                ))]
            }),
        )
    }

    /// Clamps into `[lo, hi]`; gradient passes only strictly inside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let out = map(self.value(a), |x| x.clamp(lo, hi));
        self.push(
            "clamp",
            out,
            &[a],
            Box::new(move |g, p, _, _| {
                vec![Some(zip(
                    g,
                    p[0],
                    |g, x| if x > lo && x < hi { g } else { 0.0 },
                ))]
            }),
        )
    }

    pub fn log1p(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= -1.0) {
            return Err(Error::arg(format!("log1p of {bad}")));
        }
        let out = map(self.value(a), f64::ln_1p);
        self.push(
            "log1p",
            out,
            &[a],
            Box::new(|g, p, _, _| vec![Some(zip(g, p[0], |g, x| g / (1.0 + x)))]),
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        self.push(
            "reshape",
            out,
            &[a],
            Box::new(|g, p, _, _| vec![Some(g.clone().reshape(p[0].shape()).expect("same numel"))]),
        )
    }
}

#[inline]
pub(crate) fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
