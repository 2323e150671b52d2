//! Serializable layer lists, the generator and discriminator builders, and
//! parameter checkpoints.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::Tensor;
use crate::adversarial::Domain;
use crate::error::{Error, Result};
use crate::fsutil::{put_blob, put_f64s, write_atomic, Reader};

pub const LEAKY_SLOPE: f64 = 0.2;
const INSTANCE_NORM_EPS: f64 = 1e-5;
const NET_MAGIC: &[u8; 8] = b"PCRNET01";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activation {
    Linear,
    LeakyRelu { slope: f64 },
    Clamp { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Conv3d,
}

/// One convolution. Geometry is always stored as `[depth, height, width]`;
/// 2-D layers keep depth at kernel 1, stride 1, padding 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub activation: Activation,
    /// Nearest-neighbour upsampling applied to the layer input first.
    #[serde(default)]
    pub upsample: Option<[usize; 3]>,
    /// Output of an earlier layer concatenated (channels) after upsampling.
    #[serde(default)]
    pub skip_from: Option<usize>,
    #[serde(default)]
    pub instance_norm: bool,
    /// Weights are drawn from `N(0, (gain / √fan_in)²)`.
    pub weight_gain: f64,
    pub bias_init: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum NetworkRole {
    Generator,
    Discriminator { domain: Domain },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub role: NetworkRole,
    /// Per-sample input shape: `[C, D, H, W]` for 3-D nets, `[C, H, W]` for 2-D.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    /// Encoder widths of the three levels.
    pub widths: [usize; 3],
    pub instance_norm: bool,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(in_channels: usize, planes: usize, height: usize, width: usize, seed: u64) -> Self {
        GeneratorConfig {
            in_channels,
            planes,
            height,
            width,
            widths: [8, 16, 32],
            instance_norm: false,
            seed,
        }
    }
}

fn lrelu() -> Activation {
    Activation::LeakyRelu { slope: LEAKY_SLOPE }
}

fn gain_for(a: Activation) -> f64 {
    match a {
        Activation::LeakyRelu { slope } => (2.0 / (1.0 + slope * slope)).sqrt(),
        _ => 1.0,
    }
}

fn conv3(name: &str, cin: usize, cout: usize, stride: usize) -> LayerSpec {
    LayerSpec {
        name: name.into(),
        kind: LayerKind::Conv3d,
        in_channels: cin,
        out_channels: cout,
        kernel: [3; 3],
        stride: [stride; 3],
        padding: [1; 3],
        activation: lrelu(),
        upsample: None,
        skip_from: None,
        instance_norm: false,
        weight_gain: gain_for(lrelu()),
        bias_init: 0.0,
    }
}

/// First-two-layer strides `(height, width)` of each discriminator. Every
/// layer uses kernel `stride + 2` and padding 1, so a layer maps a length `n`
/// to `⌊n / stride⌋`; the last three layers keep the size.
pub fn discriminator_strides(domain: Domain) -> [[usize; 2]; 2] {
    match domain {
        Domain::Rgb | Domain::Fourier => [[3, 4], [5, 5]],
        Domain::Dwt => [[3, 4], [4, 4]],
    }
}

pub const DISCRIMINATOR_WIDTHS: [usize; 5] = [16, 32, 64, 64, 1];

impl NetworkSpec {
    /// Three-level 3-D U-Net whose head spans all planes, producing a 3-channel
    /// image clamped to `[0, 1]`. Planes, height and width must be multiples of 4.
    pub fn generator(cfg: &GeneratorConfig) -> Result<NetworkSpec> {
        let (p, h, w) = (cfg.planes, cfg.height, cfg.width);
        if [p, h, w].iter().any(|&d| d == 0 || d % 4 != 0) || cfg.in_channels == 0 {
            return Err(Error::shape(format!(
                "generator input {}×{p}×{h}×{w}: planes, height and width must be positive multiples of 4",
                cfg.in_channels
            )));
        }
        let [c1, c2, c3] = cfg.widths;
        let mut layers = vec![
            conv3("enc1", cfg.in_channels, c1, 1),
            conv3("enc2", c1, c2, 2),
            conv3("enc3", c2, c3, 2),
            conv3("dec2", c3 + c2, c2, 1),
            conv3("dec1", c2 + c1, c1, 1),
        ];
        layers[3].upsample = Some([2; 3]);
        layers[3].skip_from = Some(1);
        layers[4].upsample = Some([2; 3]);
        layers[4].skip_from = Some(0);
        for l in &mut layers {
            l.instance_norm = cfg.instance_norm;
        }
        layers.push(LayerSpec {
            name: "head".into(),
            kind: LayerKind::Conv3d,
            in_channels: c1,
            out_channels: 3,
            kernel: [p, 3, 3],
            stride: [1; 3],
            padding: [0, 1, 1],
            activation: Activation::Clamp { lo: 0.0, hi: 1.0 },
            upsample: None,
            skip_from: None,
            instance_norm: false,
            weight_gain: 0.5,
            bias_init: 0.5,
        });
        let spec = NetworkSpec {
            role: NetworkRole::Generator,
            input_shape: vec![cfg.in_channels, p, h, w],
            layers,
            seed: cfg.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Five 2-D convolutions with leaky-relu between them and a 1-channel
    /// linear score map at the end.
    pub fn discriminator(
        domain: Domain,
        input_channels: usize,
        height: usize,
        width: usize,
        seed: u64,
    ) -> Result<NetworkSpec> {
        let [s1, s2] = discriminator_strides(domain);
        let (min_h, min_w) = (s1[0] * s2[0], s1[1] * s2[1]);
        if height < min_h || width < min_w {
            return Err(Error::shape(format!(
                "{domain} discriminator input {height}×{width} is too small; minimal legal size is {min_h}×{min_w}"
            )));
        }
        let mut layers = Vec::with_capacity(5);
        let mut cin = input_channels;
        for (i, &cout) in DISCRIMINATOR_WIDTHS.iter().enumerate() {
            let s = match i {
                0 => s1,
                1 => s2,
                _ => [1, 1],
            };
            let last = i == DISCRIMINATOR_WIDTHS.len() - 1;
            let activation = if last { Activation::Linear } else { lrelu() };
            layers.push(LayerSpec {
                name: format!("conv{}", i + 1),
                kind: LayerKind::Conv2d,
                in_channels: cin,
                out_channels: cout,
                kernel: [1, s[0] + 2, s[1] + 2],
                stride: [1, s[0], s[1]],
                padding: [0, 1, 1],
                activation,
                upsample: None,
                skip_from: None,
                instance_norm: false,
                weight_gain: gain_for(activation),
                bias_init: 0.0,
            });
            cin = cout;
        }
        let spec = NetworkSpec {
            role: NetworkRole::Discriminator { domain },
            input_shape: vec![input_channels, height, width],
            layers,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn spatial_rank(&self) -> usize {
        self.input_shape.len().saturating_sub(1)
    }

    /// Per-sample output shape of every layer.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let rank = self.spatial_rank();
        if !(2..=3).contains(&rank) || self.input_shape.contains(&0) {
            return Err(Error::shape(format!(
                "input shape {:?} must be [C, (D,) H, W]",
                self.input_shape
            )));
        }
        let mut cur: Vec<usize> = self.input_shape.clone();
        let mut outs: Vec<Vec<usize>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let err = |m: String| Error::shape(format!("layer {}: {m}", l.name));
            let want_rank = if l.kind == LayerKind::Conv2d { 2 } else { 3 };
            if rank != want_rank {
                return Err(err(format!(
                    "{:?} layer on input {:?}",
                    l.kind, self.input_shape
                )));
            }
            if l.kind == LayerKind::Conv2d
                && (l.kernel[0] != 1 || l.stride[0] != 1 || l.padding[0] != 0)
            {
                return Err(err("2-D layer with depth geometry".into()));
            }
            if l.stride.contains(&0) || l.kernel.contains(&0) {
                return Err(err("zero kernel or stride".into()));
            }
            let off = 3 - rank;
            let mut x = cur.clone();
            if let Some(u) = l.upsample {
                for a in 0..rank {
                    x[1 + a] *= u[off + a];
                }
            }
            if let Some(j) = l.skip_from {
                let s = outs
                    .get(j)
                    .ok_or_else(|| err(format!("skip from later layer {j}")))?;
                if s[1..] != x[1..] {
                    return Err(err(format!(
                        "skip {s:?} does not match upsampled input {x:?}"
                    )));
                }
                x[0] += s[0];
            }
            if x[0] != l.in_channels {
                return Err(err(format!(
                    "expects {} input channels, gets {:?}",
                    l.in_channels, x
                )));
            }
            let mut y = vec![l.out_channels];
            for a in 0..rank {
                let (n, k, s, p) = (
                    x[1 + a],
                    l.kernel[off + a],
                    l.stride[off + a],
                    l.padding[off + a],
                );
                if n + 2 * p < k {
                    return Err(err(format!(
                        "input {x:?} smaller than kernel {:?}",
                        l.kernel
                    )));
                }
                y.push((n + 2 * p - k) / s + 1);
            }
            outs.push(y.clone());
            cur = y;
        }
        Ok(outs)
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.layer_shapes()?;
        let last = shapes
            .last()
            .ok_or_else(|| Error::shape("network has no layers"))?;
        if self.role == NetworkRole::Generator && (last[0] != 3 || last[1] != 1) {
            return Err(Error::shape(format!(
                "generator must end in 3 channels and a single plane, got {last:?}"
            )));
        }
        Ok(())
    }

    /// Per-sample output shape: `[3, H, W]` for the generator, `[1, h, w]` for
    /// discriminators.
    pub fn output_shape(&self) -> Result<Vec<usize>> {
        let mut last = self
            .layer_shapes()?
            .pop()
            .ok_or_else(|| Error::shape("network has no layers"))?;
        if self.role == NetworkRole::Generator {
            last.remove(1);
        }
        Ok(last)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    pub fn from_json(s: &str) -> Result<NetworkSpec> {
        let spec: NetworkSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        let off = 3 - self.spatial_rank();
        self.layers
            .iter()
            .flat_map(|l| {
                let mut w = vec![l.out_channels, l.in_channels];
                w.extend_from_slice(&l.kernel[off..]);
                [w, vec![l.out_channels]]
            })
            .collect()
    }
}

/// Line-by-line difference of the pretty JSON forms; empty when equal.
pub fn spec_diff(expected: &NetworkSpec, found: &NetworkSpec) -> String {
    let flat = |spec: &NetworkSpec| {
        let mut out = Vec::new();
        let v = serde_json::to_value(spec).expect("spec serialises");
        flatten_json("", &v, &mut out);
        out
    };
    let (a, b) = (flat(expected), flat(found));
    let mut out = String::new();
    let keys: std::collections::BTreeSet<&String> = a.iter().chain(&b).map(|(k, _)| k).collect();
    let lookup =
        |xs: &[(String, String)], k: &str| xs.iter().find(|(x, _)| x == k).map(|(_, v)| v.clone());
    for k in keys {
        let (x, y) = (lookup(&a, k), lookup(&b, k));
        if x != y {
            if let Some(x) = x {
                out.push_str(&format!("- {k} = {x}\n"));
            }
            if let Some(y) = y {
                out.push_str(&format!("+ {k} = {y}\n"));
            }
        }
    }
    out
}

/// `path = value` pairs for every leaf; array elements with a `name` field
/// are addressed by that name.
fn flatten_json(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    use serde_json::Value;
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let p = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_json(&p, x, out);
            }
        }
        Value::Array(xs) if xs.iter().any(|x| x.is_object()) => {
            for (i, x) in xs.iter().enumerate() {
                let tag = x
                    .get("name")
                    .and_then(Value::as_str)
                    .map_or(i.to_string(), str::to_string);
                flatten_json(&format!("{prefix}[{tag}]"), x, out);
            }
        }
        leaf => out.push((prefix.to_string(), leaf.to_string())),
    }
}

/// A network specification together with its parameters, stored as
/// `[weight₀, bias₀, weight₁, bias₁, …]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<Tensor>,
}

impl Network {
    /// Validates `spec` and draws seeded initial parameters.
    pub fn new(spec: NetworkSpec) -> Result<Network> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let shapes = spec.param_shapes();
        let mut params = Vec::with_capacity(shapes.len());
        for (l, pair) in spec.layers.iter().zip(shapes.chunks(2)) {
            let fan_in: usize = pair[0][1..].iter().product();
            let std = l.weight_gain / (fan_in as f64).sqrt();
            let n = pair[0].iter().product();
            let w = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    std * z
                })
                .collect::<Vec<f64>>();
            params.push(Tensor::new(&pair[0], w)?);
            params.push(Tensor::filled(&pair[1], l.bias_init));
        }
        Ok(Network { spec, params })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<Tensor>) -> Result<Network> {
        spec.validate()?;
        let shapes = spec.param_shapes();
        if shapes.len() != params.len()
            || shapes.iter().zip(&params).any(|(s, p)| s[..] != *p.shape())
        {
            return Err(Error::shape(
                "parameter tensors do not match the network spec",
            ));
        }
        Ok(Network { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.spec.output_shape().expect("validated at construction")
    }

    /// Patch-map size `(h, w)` of a discriminator, image size of a generator.
    pub fn map_size(&self) -> (usize, usize) {
        let s = self.output_shape();
        (s[1], s[2])
    }

    /// Adds the parameters to `g`, as trainable params or frozen constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    g.param(p.clone())
                } else {
                    g.leaf(p.clone())
                }
            })
            .collect()
    }

    pub fn forward(&self, g: &mut Graph, params: &[Var], input: Var) -> Result<Var> {
        let shape = g.shape(input).to_vec();
        if shape.len() != self.spec.input_shape.len() + 1 || shape[1..] != self.spec.input_shape[..]
        {
            return Err(Error::shape(format!(
                "network expects [N, {:?}], got {shape:?}",
                self.spec.input_shape
            )));
        }
        if params.len() != self.params.len() {
            return Err(Error::arg(
                "bound parameter count does not match the network",
            ));
        }
        let off = 3 - self.spec.spatial_rank();
        let mut outs: Vec<Var> = Vec::with_capacity(self.spec.layers.len());
        let mut x = input;
        for (i, l) in self.spec.layers.iter().enumerate() {
            let mut h = x;
            if let Some(u) = l.upsample {
                h = g.upsample_nearest(h, &u[off..])?;
            }
            if let Some(j) = l.skip_from {
                h = g.concat(&[h, outs[j]], 1)?;
            }
            h = g.conv(
                h,
                params[2 * i],
                Some(params[2 * i + 1]),
                &l.stride[off..],
                &l.padding[off..],
            )?;
            if l.instance_norm {
                h = g.instance_norm(h, INSTANCE_NORM_EPS)?;
            }
            h = match l.activation {
                Activation::Linear => h,
                Activation::LeakyRelu { slope } => g.leaky_relu(h, slope)?,
                Activation::Clamp { lo, hi } => g.clamp(h, lo, hi)?,
            };
            outs.push(h);
            x = h;
        }
        if self.spec.role == NetworkRole::Generator {
            let mut s = g.shape(x).to_vec();
            s.remove(2);
            x = g.reshape(x, &s)?;
        }
        Ok(x)
    }

    /// The same parameters on inputs of a different height and width. Every
    /// layer is convolutional, so only the shape contract changes.
    pub fn with_input_hw(&self, height: usize, width: usize) -> Result<Network> {
        let mut spec = self.spec.clone();
        let n = spec.input_shape.len();
        spec.input_shape[n - 2] = height;
        spec.input_shape[n - 1] = width;
        Network::from_params(spec, self.params.clone())
    }

    /// Forward pass on constants only.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let x = g.leaf(input.clone());
        let y = self.forward(&mut g, &params, x)?;
        Ok(g.value(y).clone())
    }

    /// Magic, length-prefixed JSON spec, parameter count, little-endian `f64`s.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = NET_MAGIC.to_vec();
        put_blob(&mut out, self.spec.to_json().as_bytes());
        out.extend_from_slice(&(self.param_count() as u64).to_le_bytes());
        for p in &self.params {
            put_f64s(&mut out, p.data());
        }
        out
    }

    /// Parses [`Network::to_bytes`] output; with `expected`, refuses a
    /// different spec and reports the difference.
    pub fn from_bytes(bytes: &[u8], expected: Option<&NetworkSpec>) -> Result<Network> {
        let mut r = Reader::new(bytes, "network checkpoint");
        if r.bytes(8)? != NET_MAGIC {
            return Err(Error::Format("not a network checkpoint (bad magic)".into()));
        }
        let json = std::str::from_utf8(r.blob()?)
            .map_err(|e| Error::Format(format!("spec is not UTF-8: {e}")))?;
        let spec = NetworkSpec::from_json(json)?;
        if let Some(exp) = expected {
            if *exp != spec {
                return Err(Error::SpecMismatch(spec_diff(exp, &spec)));
            }
        }
        let count = r.u64()? as usize;
        let shapes = spec.param_shapes();
        if count
            != shapes
                .iter()
                .map(|s| s.iter().product::<usize>())
                .sum::<usize>()
        {
            return Err(Error::Format(format!(
                "parameter count {count} does not match the spec"
            )));
        }
        let mut params = Vec::with_capacity(shapes.len());
        for s in &shapes {
            params.push(Tensor::new(s, r.f64s(s.iter().product())?)?);
        }
        r.finish()?;
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("checkpoint parameter {i}")));
        }
        Network::from_params(spec, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path, expected: Option<&NetworkSpec>) -> Result<Network> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Network::from_bytes(&bytes, expected)
    }
}

pub fn build_generator(spec: NetworkSpec) -> Result<Network> {
    if spec.role != NetworkRole::Generator {
        return Err(Error::arg("build_generator needs a generator spec"));
    }
    Network::new(spec)
}

/// Discriminator for `domain` on `input_channels × height × width` inputs.
pub fn build_discriminator(
    domain: Domain,
    input_channels: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<Network> {
    Network::new(NetworkSpec::discriminator(
        domain,
        input_channels,
        height,
        width,
        seed,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_shape_contract() {
        let cfg = GeneratorConfig::new(3, 8, 64, 64, 1);
        let net = build_generator(NetworkSpec::generator(&cfg).unwrap()).unwrap();
        assert_eq!(net.output_shape(), vec![3, 64, 64]);
        let x = Tensor::filled(&[1, 3, 8, 64, 64], 0.3);
        let y = net.infer(&x).unwrap();
        assert_eq!(y.shape(), &[1, 3, 64, 64]);
        assert!(y
            .data()
            .iter()
            .all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn generator_rejects_indivisible_volumes() {
        assert!(NetworkSpec::generator(&GeneratorConfig::new(3, 6, 64, 64, 1)).is_err());
        assert!(NetworkSpec::generator(&GeneratorConfig::new(3, 8, 62, 64, 1)).is_err());
    }

    #[test]
    fn same_seed_same_network() {
        let cfg = GeneratorConfig::new(3, 4, 8, 8, 9);
        let a = build_generator(NetworkSpec::generator(&cfg).unwrap()).unwrap();
        let b = build_generator(NetworkSpec::generator(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let x = Tensor::filled(&[1, 3, 4, 8, 8], 0.2);
        assert_eq!(a.infer(&x).unwrap(), b.infer(&x).unwrap());
        let c =
            build_generator(NetworkSpec::generator(&GeneratorConfig { seed: 10, ..cfg }).unwrap())
                .unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn discriminator_map_sizes() {
        let rgb = build_discriminator(Domain::Rgb, 6, 240, 320, 0).unwrap();
        assert_eq!(rgb.map_size(), (16, 16));
        let fourier = build_discriminator(Domain::Fourier, 2, 240, 320, 0).unwrap();
        assert_eq!(fourier.map_size(), (16, 16));
        let dwt = build_discriminator(Domain::Dwt, 6, 120, 160, 0).unwrap();
        assert_eq!(dwt.map_size(), (10, 10));
        // 64 → ⌊64/3⌋ = 21 → ⌊21/5⌋ = 4 rows; 64 → 16 → 3 columns
        assert_eq!(
            build_discriminator(Domain::Rgb, 6, 64, 64, 0)
                .unwrap()
                .map_size(),
            (4, 3)
        );
        // 32 → 10 → 2; 32 → 8 → 2
        assert_eq!(
            build_discriminator(Domain::Dwt, 6, 32, 32, 0)
                .unwrap()
                .map_size(),
            (2, 2)
        );
    }

    #[test]
    fn too_small_discriminator_input_names_minimum() {
        let msg = build_discriminator(Domain::Rgb, 6, 14, 64, 0)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("15×20"), "{msg}");
        assert!(build_discriminator(Domain::Rgb, 6, 15, 20, 0).is_ok());
        let msg = build_discriminator(Domain::Dwt, 6, 12, 15, 0)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("12×16"), "{msg}");
    }

    #[test]
    fn spec_json_round_trip() {
        for spec in [
            NetworkSpec::generator(&GeneratorConfig::new(3, 8, 16, 16, 3)).unwrap(),
            NetworkSpec::discriminator(Domain::Fourier, 2, 40, 40, 4).unwrap(),
        ] {
            assert_eq!(NetworkSpec::from_json(&spec.to_json()).unwrap(), spec);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let net = build_discriminator(Domain::Dwt, 6, 24, 32, 5).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(Network::from_bytes(&bytes, Some(net.spec())).unwrap(), net);
        let other = NetworkSpec::discriminator(Domain::Dwt, 6, 24, 32, 6).unwrap();
        let err = Network::from_bytes(&bytes, Some(&other)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("- seed = 6\n+ seed = 5"), "{msg}");
        let wide = NetworkSpec::discriminator(Domain::Rgb, 6, 24, 32, 5).unwrap();
        let d = spec_diff(&wide, net.spec());
        assert!(
            d.contains("- input_shape[0]") || d.contains("- role"),
            "{d}"
        );
        assert!(Network::from_bytes(&bytes[..bytes.len() - 1], None).is_err());
    }

    #[test]
    fn every_parameter_gets_a_gradient() {
        let cfg = GeneratorConfig::new(3, 4, 8, 8, 2);
        let net = build_generator(NetworkSpec::generator(&cfg).unwrap()).unwrap();
        let mut g = Graph::new();
        let params = net.bind(&mut g, true);
        let x = g.leaf(Tensor::filled(&[1, 3, 4, 8, 8], 0.4));
        let y = net.forward(&mut g, &params, x).unwrap();
        let loss = g.sq_dev_sum(y, 0.9).unwrap();
        let grads = g.backward(loss).unwrap();
        for (p, t) in params.iter().zip(net.params()) {
            let gp = grads.get(*p).expect("gradient present");
            assert_eq!(gp.shape(), t.shape());
            assert!(gp.data().iter().any(|v| *v != 0.0));
        }
    }
}
