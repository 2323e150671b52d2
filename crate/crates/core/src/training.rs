//! Alternating discriminator/generator updates with Adam, step learning-rate
//! decay, aligned random crops, resumable checkpoints and the run directory
//! (`checkpoints/`, `snapshots/`, `losses.csv`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::{
    assemble_input, g_loss, lsgan_d_loss, Domain, FeatureExtractor, GanLabels, PerceptualConfig,
    Reduction,
};
use crate::error::{Error, Result};
use crate::fsutil::{put_blob, put_f64s, write_atomic, Reader};
use crate::geometry::{Frustum, SyntheticScene};
use crate::image::Image;
use crate::nn::{GeneratorConfig, Graph, Network, NetworkSpec, Tensor, Var};
use crate::voxelisation::{
    rasterize_zbuffer, voxelise, MultiPlaneVolume, RasterImage, VoxelConfig,
};

pub const LOSS_CSV_HEADER: &str =
    "iter,g_total,g_percept,g_adv_rgb,g_adv_fourier,g_adv_dwt,d_rgb,d_fourier,d_dwt";
const TRAIN_MAGIC: &[u8; 8] = b"PCRTRN01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stops after this many steps instead of `epochs` full passes.
    pub max_steps: Option<u64>,
    pub lr_initial: f64,
    pub lr_after_decay: f64,
    pub decay_epoch: usize,
    pub crop_h: usize,
    pub crop_w: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub enabled_domains: Vec<Domain>,
    pub labels: GanLabels,
    pub perceptual: PerceptualConfig,
    pub reduction: Reduction,
    pub generator_widths: [usize; 3],
    pub instance_norm: bool,
    /// 0 disables periodic checkpoints (a final one is always written).
    pub checkpoint_every: u64,
    /// 0 disables snapshots.
    pub snapshot_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 64,
            max_steps: None,
            lr_initial: 0.002,
            lr_after_decay: 0.001,
            decay_epoch: 25,
            crop_h: 64,
            crop_w: 64,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            enabled_domains: Domain::ALL.to_vec(),
            labels: GanLabels::default(),
            perceptual: PerceptualConfig::default(),
            reduction: Reduction::Sum,
            generator_widths: [8, 16, 32],
            instance_norm: false,
            checkpoint_every: 50,
            snapshot_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr_after_decay > 0.0 && self.lr_after_decay <= self.lr_initial) {
            return bad(format!(
                "need 0 < lr_after_decay ({}) ≤ lr_initial ({})",
                self.lr_after_decay, self.lr_initial
            ));
        }
        if self.decay_epoch > self.epochs {
            return bad(format!(
                "decay_epoch {} exceeds epochs {}",
                self.decay_epoch, self.epochs
            ));
        }
        if self.crop_h == 0
            || self.crop_w == 0
            || !self.crop_h.is_multiple_of(4)
            || !self.crop_w.is_multiple_of(4)
        {
            return bad(format!(
                "crop {}×{} must be positive multiples of 4 (even for the wavelet halving, 4 for the generator)",
                self.crop_h, self.crop_w
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0
        {
            return bad("Adam needs 0 ≤ β1, β2 < 1 and ε > 0".into());
        }
        let mut d = self.enabled_domains.clone();
        d.sort();
        d.dedup();
        if d.len() != self.enabled_domains.len() {
            return bad("duplicate discriminator domain".into());
        }
        self.labels.validate()?;
        FeatureExtractor::new(&self.perceptual)?;
        Ok(())
    }
}

/// Single step decay: `lr_initial` before `decay_epoch`, `lr_after_decay` from then on.
pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> f64 {
    if epoch < cfg.decay_epoch {
        cfg.lr_initial
    } else {
        cfg.lr_after_decay
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moments for a list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> AdamState {
        AdamState {
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.t.to_le_bytes());
        for (m, v) in self.m.iter().zip(&self.v) {
            put_f64s(out, m);
            put_f64s(out, v);
        }
    }

    fn read(r: &mut Reader, params: &[Tensor]) -> Result<AdamState> {
        let t = r.u64()?;
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for p in params {
            m.push(r.f64s(p.numel())?);
            v.push(r.f64s(p.numel())?);
        }
        Ok(AdamState { t, m, v })
    }
}

/// Bias-corrected Adam. A missing gradient counts as zero. Non-finite
/// gradients abort before anything is modified.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Option<Tensor>],
    state: &mut AdamState,
    hp: &AdamHyper,
    names: &[String],
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if let Some(g) = g {
            if g.shape() != p.shape() {
                return Err(Error::shape(format!(
                    "adam: grad {:?} vs param {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.is_finite() {
                let name = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
    }
    state.t += 1;
    let bc1 = 1.0 - hp.beta1.powi(state.t as i32);
    let bc2 = 1.0 - hp.beta2.powi(state.t as i32);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let g = grads[i].as_ref().map(|g| g.data());
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            let gj = g.map_or(0.0, |g| g[j]);
            m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * gj;
            v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * gj * gj;
            let mh = m[j] / bc1;
            let vh = v[j] / bc2;
            *x -= hp.lr * mh / (vh.sqrt() + hp.eps);
        }
    }
    Ok(())
}

/// `layer.weight`, `layer.bias`, … in parameter order.
pub fn param_names(net: &Network) -> Vec<String> {
    net.spec()
        .layers
        .iter()
        .flat_map(|l| [format!("{}.weight", l.name), format!("{}.bias", l.name)])
        .collect()
}

/// One view: voxel volume, ground-truth image and z-buffer raster, all on the
/// same pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub volume: MultiPlaneVolume,
    pub image: Image,
    pub raster: RasterImage,
}

impl TrainSample {
    pub fn new(volume: MultiPlaneVolume, image: Image, raster: RasterImage) -> Result<TrainSample> {
        let dims = [
            (volume.height, volume.width),
            (image.height, image.width),
            (raster.height(), raster.width()),
        ];
        if dims[0] != dims[1]
            || dims[0] != dims[2]
            || image.channels != 3
            || raster.pixels.channels != 3
        {
            return Err(Error::shape(format!(
                "misaligned sample: volume {}×{}, image {}×{}×{}, raster {}×{}×{}",
                volume.height,
                volume.width,
                image.channels,
                image.height,
                image.width,
                raster.pixels.channels,
                raster.height(),
                raster.width()
            )));
        }
        Ok(TrainSample {
            volume,
            image,
            raster,
        })
    }

    pub fn height(&self) -> usize {
        self.image.height
    }

    pub fn width(&self) -> usize {
        self.image.width
    }

    /// The same window of the volume (full plane depth), image and raster.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<TrainSample> {
        TrainSample::new(
            self.volume.crop(y0, x0, h, w)?,
            self.image.crop(y0, x0, h, w)?,
            self.raster.crop(y0, x0, h, w)?,
        )
    }

    /// `[1, C, P, H, W]` generator input.
    pub fn volume_tensor(&self) -> Tensor {
        volume_tensor(&self.volume)
    }
}

pub fn volume_tensor(v: &MultiPlaneVolume) -> Tensor {
    Tensor::new(
        &[1, v.channels, v.planes, v.height, v.width],
        v.to_channel_major(),
    )
    .expect("consistent volume")
}

/// Uniform top-left corner of a `crop_h × crop_w` window inside `h × w`.
pub fn random_window(
    h: usize,
    w: usize,
    crop_h: usize,
    crop_w: usize,
    rng: &mut impl Rng,
) -> Result<(usize, usize)> {
    if crop_h > h || crop_w > w || crop_h == 0 || crop_w == 0 {
        return Err(Error::arg(format!(
            "cannot crop {crop_h}×{crop_w} from {h}×{w}"
        )));
    }
    Ok((
        rng.random_range(0..=h - crop_h),
        rng.random_range(0..=w - crop_w),
    ))
}

pub fn random_crop(
    sample: &TrainSample,
    crop_h: usize,
    crop_w: usize,
    rng: &mut impl Rng,
) -> Result<TrainSample> {
    let (y0, x0) = random_window(sample.height(), sample.width(), crop_h, crop_w, rng)?;
    sample.crop(y0, x0, crop_h, crop_w)
}

/// Voxelises, rasterises and ray-casts every view of a synthetic scene.
pub fn scene_samples(
    scene: &SyntheticScene,
    frustum: &Frustum,
    voxel: &VoxelConfig,
) -> Result<Vec<TrainSample>> {
    scene
        .views
        .iter()
        .map(|view| {
            TrainSample::new(
                voxelise(&scene.cloud, view, frustum, voxel)?,
                scene.ground_truth(view),
                rasterize_zbuffer(&scene.cloud, view, frustum),
            )
        })
        .collect()
}

/// Runs the generator on a whole volume, whatever its height and width.
pub fn render_volume(generator: &Network, volume: &MultiPlaneVolume) -> Result<Image> {
    let spec_in = &generator.spec().input_shape;
    if spec_in[0] != volume.channels || spec_in[1] != volume.planes {
        return Err(Error::SpecMismatch(format!(
            "generator expects {} channels × {} planes, volume has {} × {}",
            spec_in[0], spec_in[1], volume.channels, volume.planes
        )));
    }
    let net = generator.with_input_hw(volume.height, volume.width)?;
    net.infer(&volume_tensor(volume))?.to_image()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub iter: u64,
    pub g_total: f64,
    pub g_percept: f64,
    /// Indexed like [`Domain::ALL`]; `None` for disabled domains.
    pub g_adv: [Option<f64>; 3],
    pub d: [Option<f64>; 3],
}

impl LossRecord {
    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let mut cols = vec![
            self.iter.to_string(),
            format!("{:?}", self.g_total),
            format!("{:?}", self.g_percept),
        ];
        cols.extend(self.g_adv.iter().map(|&v| f(v)));
        cols.extend(self.d.iter().map(|&v| f(v)));
        cols.join(",")
    }

    pub fn is_finite(&self) -> bool {
        [self.g_total, self.g_percept].iter().all(|v| v.is_finite())
            && self
                .g_adv
                .iter()
                .chain(&self.d)
                .flatten()
                .all(|v| v.is_finite())
    }
}

fn domain_slot(d: Domain) -> usize {
    Domain::ALL.iter().position(|&x| x == d).expect("listed")
}

/// Networks, optimiser moments, step counter and crop RNG: everything needed
/// to continue a run bit for bit.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub generator: Network,
    pub discriminators: Vec<(Domain, Network)>,
    pub g_adam: AdamState,
    pub d_adam: Vec<AdamState>,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

/// On-disk form of a [`TrainState`].
pub type Checkpoint = TrainState;

fn component_seed(seed: u64, k: u64) -> u64 {
    seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl TrainState {
    /// Fresh networks for `channels × planes` volumes and the configured crop.
    pub fn new(cfg: &TrainConfig, channels: usize, planes: usize) -> Result<TrainState> {
        cfg.validate()?;
        let (generator, discriminators) = build_networks(cfg, channels, planes)?;
        let g_adam = AdamState::new(generator.params());
        let d_adam = discriminators
            .iter()
            .map(|(_, n)| AdamState::new(n.params()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(TrainState {
            generator,
            discriminators,
            g_adam,
            d_adam,
            step: 0,
            rng,
        })
    }

    pub fn to_bytes(&self, epoch: u64) -> Vec<u8> {
        let mut out = TRAIN_MAGIC.to_vec();
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&epoch.to_le_bytes());
        out.extend_from_slice(&self.rng.get_seed());
        out.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        put_blob(&mut out, &self.generator.to_bytes());
        self.g_adam.write(&mut out);
        out.extend_from_slice(&(self.discriminators.len() as u64).to_le_bytes());
        for ((d, net), adam) in self.discriminators.iter().zip(&self.d_adam) {
            put_blob(&mut out, d.name().as_bytes());
            put_blob(&mut out, &net.to_bytes());
            adam.write(&mut out);
        }
        out
    }

    /// Parses a checkpoint, refusing networks that differ from `expected`
    /// (generator first, then discriminators in order).
    pub fn from_bytes(bytes: &[u8], expected: Option<&[NetworkSpec]>) -> Result<TrainState> {
        let mut r = Reader::new(bytes, "training checkpoint");
        if r.bytes(8)? != TRAIN_MAGIC {
            return Err(Error::Format(
                "not a training checkpoint (bad magic)".into(),
            ));
        }
        let step = r.u64()?;
        let _epoch = r.u64()?;
        let seed: [u8; 32] = r.bytes(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.bytes(16)?.try_into().expect("16 bytes"));
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        let exp = |i: usize| expected.and_then(|e| e.get(i));
        let generator = Network::from_bytes(r.blob()?, exp(0))?;
        let g_adam = AdamState::read(&mut r, generator.params())?;
        let n = r.u64()? as usize;
        if let Some(e) = expected {
            if e.len() != n + 1 {
                return Err(Error::SpecMismatch(format!(
                    "checkpoint has {n} discriminators, configuration has {}",
                    e.len() - 1
                )));
            }
        }
        let mut discriminators = Vec::with_capacity(n);
        let mut d_adam = Vec::with_capacity(n);
        for i in 0..n {
            let name = std::str::from_utf8(r.blob()?).map_err(|e| Error::Format(e.to_string()))?;
            let domain: Domain = name.parse()?;
            let net = Network::from_bytes(r.blob()?, exp(i + 1))?;
            d_adam.push(AdamState::read(&mut r, net.params())?);
            discriminators.push((domain, net));
        }
        r.finish()?;
        Ok(TrainState {
            generator,
            discriminators,
            g_adam,
            d_adam,
            step,
            rng,
        })
    }
}

fn build_networks(
    cfg: &TrainConfig,
    channels: usize,
    planes: usize,
) -> Result<(Network, Vec<(Domain, Network)>)> {
    let gen_cfg = GeneratorConfig {
        in_channels: channels,
        planes,
        height: cfg.crop_h,
        width: cfg.crop_w,
        widths: cfg.generator_widths,
        instance_norm: cfg.instance_norm,
        seed: component_seed(cfg.seed, 0),
    };
    let generator = Network::new(NetworkSpec::generator(&gen_cfg)?)?;
    let mut domains = cfg.enabled_domains.clone();
    domains.sort();
    let discriminators = domains
        .iter()
        .map(|&d| {
            let (h, w) = d.input_size(cfg.crop_h, cfg.crop_w);
            let net = Network::new(NetworkSpec::discriminator(
                d,
                d.input_channels(),
                h,
                w,
                component_seed(cfg.seed, 1 + domain_slot(d) as u64),
            )?)?;
            Ok((d, net))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((generator, discriminators))
}

/// Specs a configuration produces: generator, then discriminators.
pub fn expected_specs(
    cfg: &TrainConfig,
    channels: usize,
    planes: usize,
) -> Result<Vec<NetworkSpec>> {
    let (g, ds) = build_networks(cfg, channels, planes)?;
    let mut v = vec![g.spec().clone()];
    v.extend(ds.iter().map(|(_, n)| n.spec().clone()));
    Ok(v)
}

pub struct StepOutput {
    pub record: LossRecord,
    pub generated: Image,
}

fn collect_grads(grads: &crate::nn::Gradients, vars: &[Var]) -> Vec<Option<Tensor>> {
    vars.iter().map(|&v| grads.get(v).cloned()).collect()
}

/// One discriminator update on all enabled domains (generator output
/// detached) followed by one generator update against the updated, frozen
/// discriminators. `batch` must already be cropped to the network size.
pub fn train_step(
    state: &mut TrainState,
    batch: &TrainSample,
    cfg: &TrainConfig,
    extractor: &FeatureExtractor,
    lr: f64,
) -> Result<StepOutput> {
    let hp = AdamHyper {
        lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
    };
    let mut g = Graph::new();
    let gp = state.generator.bind(&mut g, true);
    let vol = g.leaf(batch.volume_tensor());
    let fake = state.generator.forward(&mut g, &gp, vol)?;
    let real = g.leaf(Tensor::from_image(&batch.image));
    let raster = g.leaf(Tensor::from_image(&batch.raster.pixels));

    let mut record = LossRecord {
        iter: state.step + 1,
        g_total: 0.0,
        g_percept: 0.0,
        g_adv: [None; 3],
        d: [None; 3],
    };

    if !state.discriminators.is_empty() {
        let fake_d = g.detach(fake);
        let mut terms = Vec::new();
        let mut bound = Vec::new();
        for (domain, net) in &state.discriminators {
            let dp = net.bind(&mut g, true);
            let in_real = assemble_input(&mut g, *domain, real, raster)?;
            let in_fake = assemble_input(&mut g, *domain, fake_d, raster)?;
            let sr = net.forward(&mut g, &dp, in_real)?;
            let sf = net.forward(&mut g, &dp, in_fake)?;
            let l = lsgan_d_loss(&mut g, sr, sf, &cfg.labels, cfg.reduction)?;
            record.d[domain_slot(*domain)] = Some(g.value(l).item());
            terms.push(l);
            bound.push(dp);
        }
        let total = g.sum_scalars(&terms)?;
        let grads = g.backward(total)?;
        if gp.iter().any(|&v| grads.get(v).is_some()) {
            return Err(Error::Config(
                "generator received a gradient in the discriminator step".into(),
            ));
        }
        for (k, dp) in bound.iter().enumerate() {
            let names = param_names(&state.discriminators[k].1);
            let gr = collect_grads(&grads, dp);
            adam_step(
                state.discriminators[k].1.params_mut(),
                &gr,
                &mut state.d_adam[k],
                &hp,
                &names,
            )?;
        }
    }

    let mut scores = Vec::new();
    let mut frozen = Vec::new();
    for (domain, net) in &state.discriminators {
        let dp = net.bind(&mut g, false);
        let inp = assemble_input(&mut g, *domain, fake, raster)?;
        scores.push((*domain, net.forward(&mut g, &dp, inp)?));
        frozen.extend(dp);
    }
    let domains: Vec<Domain> = state.discriminators.iter().map(|(d, _)| *d).collect();
    let gl = g_loss(
        &mut g,
        &scores,
        &domains,
        fake,
        real,
        &cfg.labels,
        extractor,
        cfg.reduction,
    )?;
    record.g_total = g.value(gl.total).item();
    record.g_percept = g.value(gl.perceptual).item();
    for (d, v) in &gl.adversarial {
        record.g_adv[domain_slot(*d)] = Some(g.value(*v).item());
    }
    let grads = g.backward(gl.total)?;
    if frozen.iter().any(|&v| grads.get(v).is_some()) {
        return Err(Error::Config(
            "discriminator received a gradient in the generator step".into(),
        ));
    }
    let names = param_names(&state.generator);
    let gr = collect_grads(&grads, &gp);
    adam_step(
        state.generator.params_mut(),
        &gr,
        &mut state.g_adam,
        &hp,
        &names,
    )?;

    state.step += 1;
    let generated = g.value(fake).to_image()?;
    Ok(StepOutput { record, generated })
}

/// A training run over a fixed list of samples, one sample per step in order,
/// each randomly cropped to the configured size.
pub struct Trainer {
    cfg: TrainConfig,
    samples: Vec<TrainSample>,
    state: TrainState,
    extractor: FeatureExtractor,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, samples: Vec<TrainSample>) -> Result<Trainer> {
        let (c, p) = Trainer::check_samples(&cfg, &samples)?;
        let state = TrainState::new(&cfg, c, p)?;
        let extractor = FeatureExtractor::new(&cfg.perceptual)?;
        Ok(Trainer {
            cfg,
            samples,
            state,
            extractor,
        })
    }

    /// Continues from a checkpoint; the networks it holds must match what
    /// `cfg` would build.
    pub fn resume(
        cfg: TrainConfig,
        samples: Vec<TrainSample>,
        checkpoint: &Path,
    ) -> Result<Trainer> {
        let (c, p) = Trainer::check_samples(&cfg, &samples)?;
        cfg.validate()?;
        let specs = expected_specs(&cfg, c, p)?;
        let bytes = fs::read(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
        let state = TrainState::from_bytes(&bytes, Some(&specs))?;
        let extractor = FeatureExtractor::new(&cfg.perceptual)?;
        Ok(Trainer {
            cfg,
            samples,
            state,
            extractor,
        })
    }

    fn check_samples(cfg: &TrainConfig, samples: &[TrainSample]) -> Result<(usize, usize)> {
        let first = samples
            .first()
            .ok_or_else(|| Error::arg("no training samples"))?;
        let (c, p) = (first.volume.channels, first.volume.planes);
        for s in samples {
            if (s.volume.channels, s.volume.planes) != (c, p) {
                return Err(Error::shape(
                    "training volumes differ in channels or planes",
                ));
            }
            if s.height() < cfg.crop_h || s.width() < cfg.crop_w {
                return Err(Error::arg(format!(
                    "sample {}×{} smaller than crop {}×{}",
                    s.height(),
                    s.width(),
                    cfg.crop_h,
                    cfg.crop_w
                )));
            }
        }
        Ok((c, p))
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn samples(&self) -> &[TrainSample] {
        &self.samples
    }

    pub fn epoch(&self) -> usize {
        (self.state.step / self.samples.len() as u64) as usize
    }

    pub fn total_steps(&self) -> u64 {
        self.cfg
            .max_steps
            .unwrap_or((self.cfg.epochs * self.samples.len()) as u64)
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.total_steps()
    }

    pub fn step(&mut self) -> Result<(StepOutput, TrainSample)> {
        let idx = (self.state.step % self.samples.len() as u64) as usize;
        let batch = random_crop(
            &self.samples[idx],
            self.cfg.crop_h,
            self.cfg.crop_w,
            &mut self.state.rng,
        )?;
        let lr = lr_schedule(&self.cfg, self.epoch());
        let out = train_step(&mut self.state, &batch, &self.cfg, &self.extractor, lr)?;
        Ok((out, batch))
    }

    /// Generator output for a whole sample.
    pub fn render(&self, sample: usize) -> Result<Image> {
        render_volume(&self.state.generator, &self.samples[sample].volume)
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        self.state.to_bytes(self.epoch() as u64)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.checkpoint_bytes())
    }
}

/// Paths inside a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn snapshots(&self) -> PathBuf {
        self.root.join("snapshots")
    }

    pub fn losses(&self) -> PathBuf {
        self.root.join("losses.csv")
    }

    pub fn checkpoint(&self, step: u64) -> PathBuf {
        self.checkpoints().join(format!("step_{step:06}.ckpt"))
    }

    pub fn latest(&self) -> PathBuf {
        self.checkpoints().join("latest.ckpt")
    }

    pub fn snapshot(&self, step: u64) -> PathBuf {
        self.snapshots().join(format!("step_{step:06}.png"))
    }

    pub fn create(&self) -> Result<()> {
        for d in [self.checkpoints(), self.snapshots()] {
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(())
    }
}

/// Keeps the header and the rows up to `step` of an existing loss log, so a
/// resumed run appends exactly where the checkpoint left off.
fn prepare_loss_log(path: &Path, step: u64) -> Result<fs::File> {
    let mut kept = format!("{LOSS_CSV_HEADER}\n");
    if step > 0 {
        if let Ok(text) = fs::read_to_string(path) {
            for line in text.lines().skip(1) {
                let iter = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
                if iter.is_some_and(|i| i <= step) {
                    kept.push_str(line);
                    kept.push('\n');
                }
            }
        }
    }
    fs::write(path, kept).map_err(|e| Error::io(path, e))?;
    fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))
}

/// Trains until the configured step budget, writing the loss log, periodic
/// snapshots (`raster | generated | ground truth`) and checkpoints under
/// `layout`. `on_step` sees every loss record.
pub fn run_training(
    trainer: &mut Trainer,
    layout: &RunLayout,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<()> {
    layout.create()?;
    let losses = layout.losses();
    let mut log = prepare_loss_log(&losses, trainer.state.step)?;
    while !trainer.is_done() {
        let (out, batch) = trainer.step()?;
        let rec = &out.record;
        if !rec.is_finite() {
            return Err(Error::NonFinite(format!("loss at iteration {}", rec.iter)));
        }
        writeln!(log, "{}", rec.csv_row()).map_err(|e| Error::io(&losses, e))?;
        on_step(rec);
        let step = trainer.state.step;
        let cfg = &trainer.cfg;
        if cfg.snapshot_every > 0 && step.is_multiple_of(cfg.snapshot_every) {
            Image::hstack(&[&batch.raster.pixels, &out.generated, &batch.image])?
                .save_png(&layout.snapshot(step))?;
        }
        if cfg.checkpoint_every > 0 && step.is_multiple_of(cfg.checkpoint_every) {
            trainer.save_checkpoint(&layout.checkpoint(step))?;
        }
    }
    log.flush().map_err(|e| Error::io(&losses, e))?;
    trainer.save_checkpoint(&layout.latest())
}
