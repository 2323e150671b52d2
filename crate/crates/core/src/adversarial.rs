//! Discriminator inputs for the RGB, Fourier and wavelet domains, the
//! least-squares patch losses and the perceptual loss.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{Graph, Tensor, Var};
use crate::voxelisation::RasterImage;

/// The three discriminator domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Rgb,
    Fourier,
    Dwt,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Rgb, Domain::Fourier, Domain::Dwt];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Rgb => "rgb",
            Domain::Fourier => "fourier",
            Domain::Dwt => "dwt",
        }
    }

    /// Channels of the assembled discriminator input.
    pub fn input_channels(self) -> usize {
        match self {
            Domain::Rgb | Domain::Dwt => 6,
            Domain::Fourier => 2,
        }
    }

    /// Spatial size of the assembled input for an `h × w` image.
    pub fn input_size(self, h: usize, w: usize) -> (usize, usize) {
        match self {
            Domain::Rgb | Domain::Fourier => (h, w),
            Domain::Dwt => (h.div_ceil(2), w.div_ceil(2)),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Domain> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::arg(format!(
                    "unknown domain `{s}` (expected rgb, fourier or dwt)"
                ))
            })
    }
}

/// Parses a comma-separated domain list such as `rgb,fourier`. Order and
/// duplicates are normalised away.
pub fn parse_domains(s: &str) -> Result<Vec<Domain>> {
    let mut out: Vec<Domain> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::arg("at least one discriminator domain is required"));
    }
    Ok(out)
}

/// The four discriminator combinations compared in the ablation study.
pub const ABLATION_CONFIGS: [(&str, &[Domain]); 4] = [
    ("spatial_only", &[Domain::Rgb]),
    ("spatial_fourier", &[Domain::Rgb, Domain::Fourier]),
    ("spatial_dwt", &[Domain::Rgb, Domain::Dwt]),
    ("all", &[Domain::Rgb, Domain::Fourier, Domain::Dwt]),
];

/// Least-squares GAN targets: `real` for real inputs and `fake` for generated
/// ones in the discriminator loss, `target` for generated ones in the
/// generator loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanLabels {
    pub real: f64,
    pub fake: f64,
    pub target: f64,
}

impl Default for GanLabels {
    fn default() -> Self {
        GanLabels {
            real: 1.0,
            fake: 0.0,
            target: 1.0,
        }
    }
}

impl GanLabels {
    pub fn validate(&self) -> Result<()> {
        if self.real == self.fake {
            return Err(Error::Config("real and fake labels must differ".into()));
        }
        if ![self.real, self.fake, self.target]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Config("labels must be finite".into()));
        }
        Ok(())
    }
}

/// How squared patch errors are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Sum,
    /// Divided by the number of patches.
    Mean,
}

impl FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Reduction> {
        match s.trim() {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            other => Err(Error::arg(format!(
                "unknown reduction `{other}` (expected sum or mean)"
            ))),
        }
    }
}

/// A discriminator's output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScoreMap {
    pub height: usize,
    pub width: usize,
    pub scores: Vec<f64>,
}

impl PatchScoreMap {
    pub fn new(height: usize, width: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != height * width {
            return Err(Error::shape(format!(
                "score map {height}×{width} needs {} values, got {}",
                height * width,
                scores.len()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("patch scores".into()));
        }
        Ok(PatchScoreMap {
            height,
            width,
            scores,
        })
    }

    pub fn filled(height: usize, width: usize, v: f64) -> Self {
        PatchScoreMap {
            height,
            width,
            scores: vec![v; height * width],
        }
    }

    /// From a `[1, 1, h, w]` discriminator output.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [1, 1, h, w] => PatchScoreMap::new(h, w, t.data().to_vec()),
            _ => Err(Error::shape(format!(
                "score map must be [1, 1, h, w], got {:?}",
                t.shape()
            ))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[1, 1, self.height, self.width], self.scores.clone()).expect("consistent dims")
    }
}

fn check_pair(g: &Graph, image: Var, raster: Var) -> Result<()> {
    let (a, b) = (g.shape(image), g.shape(raster));
    let ok = a.len() == 4
        && b.len() == 4
        && a[0] == 1
        && b[0] == 1
        && a[1] == 3
        && b[1] == 3
        && a[2..] == b[2..];
    if !ok {
        return Err(Error::shape(format!(
            "candidate image {a:?} and raster {b:?} must both be [1, 3, H, W] with equal H, W"
        )));
    }
    Ok(())
}

fn log_spectrum(g: &mut Graph, image: Var) -> Result<Var> {
    let gray = g.grayscale(image)?;
    let mag = g.fft_magnitude(gray)?;
    g.log1p(mag)
}

fn detail_bands(g: &mut Graph, image: Var) -> Result<Var> {
    let gray = g.grayscale(image)?;
    g.dwt_detail(gray)
}

/// Candidate image and raster stacked on channels: `[1, 6, H, W]`.
pub fn assemble_rgb_input(g: &mut Graph, image: Var, raster: Var) -> Result<Var> {
    check_pair(g, image, raster)?;
    g.concat(&[image, raster], 1)
}

/// Log-magnitude spectra of the grayscale candidate and raster, each
/// min-max normalised: `[1, 2, H, W]`.
pub fn assemble_fourier_input(g: &mut Graph, image: Var, raster: Var) -> Result<Var> {
    check_pair(g, image, raster)?;
    let a = log_spectrum(g, image)?;
    let b = log_spectrum(g, raster)?;
    let both = g.concat(&[a, b], 1)?;
    g.minmax_normalize(both)
}

/// `HL, LH, HH` of the grayscale candidate, then of the raster:
/// `[1, 6, ⌈H/2⌉, ⌈W/2⌉]`.
pub fn assemble_dwt_input(g: &mut Graph, image: Var, raster: Var) -> Result<Var> {
    check_pair(g, image, raster)?;
    let a = detail_bands(g, image)?;
    let b = detail_bands(g, raster)?;
    g.concat(&[a, b], 1)
}

pub fn assemble_input(g: &mut Graph, domain: Domain, image: Var, raster: Var) -> Result<Var> {
    match domain {
        Domain::Rgb => assemble_rgb_input(g, image, raster),
        Domain::Fourier => assemble_fourier_input(g, image, raster),
        Domain::Dwt => assemble_dwt_input(g, image, raster),
    }
}

/// Non-differentiable convenience wrapper around [`assemble_input`].
pub fn assemble_input_tensor(
    domain: Domain,
    image: &Image,
    raster: &RasterImage,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let a = g.leaf(Tensor::from_image(image));
    let b = g.leaf(Tensor::from_image(&raster.pixels));
    let out = assemble_input(&mut g, domain, a, b)?;
    Ok(g.value(out).clone())
}

fn reduce(g: &mut Graph, v: Var, n: usize, reduction: Reduction) -> Result<Var> {
    match reduction {
        Reduction::Sum => Ok(v),
        Reduction::Mean => g.scale(v, 1.0 / n as f64),
    }
}

/// `Σ (real − a)² + Σ (fake − b)²` over the patch grid.
pub fn lsgan_d_loss(
    g: &mut Graph,
    real: Var,
    fake: Var,
    labels: &GanLabels,
    reduction: Reduction,
) -> Result<Var> {
    if g.shape(real) != g.shape(fake) {
        return Err(Error::shape(format!(
            "real scores {:?} vs fake scores {:?}",
            g.shape(real),
            g.shape(fake)
        )));
    }
    let n = g.value(real).numel();
    let r = g.sq_dev_sum(real, labels.real)?;
    let f = g.sq_dev_sum(fake, labels.fake)?;
    let s = g.add(r, f)?;
    reduce(g, s, n, reduction)
}

/// `Σ (scores − c)²`: the generator's adversarial term for one domain.
pub fn lsgan_g_term(
    g: &mut Graph,
    fake: Var,
    labels: &GanLabels,
    reduction: Reduction,
) -> Result<Var> {
    let n = g.value(fake).numel();
    let s = g.sq_dev_sum(fake, labels.target)?;
    reduce(g, s, n, reduction)
}

/// Value-only form of [`lsgan_d_loss`] on score maps.
pub fn lsgan_d_loss_value(
    real: &PatchScoreMap,
    fake: &PatchScoreMap,
    labels: &GanLabels,
) -> Result<f64> {
    let mut g = Graph::new();
    let r = g.leaf(real.to_tensor());
    let f = g.leaf(fake.to_tensor());
    let l = lsgan_d_loss(&mut g, r, f, labels, Reduction::Sum)?;
    Ok(g.value(l).item())
}

/// Unweighted sum of the per-domain discriminator losses, in the order given.
pub fn total_d_loss(per_domain: &[(Domain, f64)]) -> f64 {
    per_domain.iter().map(|(_, v)| v).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptualConfig {
    /// One weight per extractor stage; 0 drops the stage.
    pub layer_weights: Vec<f64>,
    pub seed: u64,
}

impl Default for PerceptualConfig {
    fn default() -> Self {
        PerceptualConfig {
            layer_weights: vec![1.0; FEATURE_STAGES],
            seed: 0x5EED_F00D,
        }
    }
}

pub const FEATURE_STAGES: usize = 3;
pub const FEATURE_WIDTHS: [usize; FEATURE_STAGES] = [8, 16, 32];

/// Frozen random convolutional features: three stride-2 3×3 convolutions with
/// leaky-relu, weights drawn once from the configured seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    weights: Vec<(Tensor, Tensor)>,
    layer_weights: Vec<f64>,
}

impl FeatureExtractor {
    pub fn new(cfg: &PerceptualConfig) -> Result<FeatureExtractor> {
        if cfg.layer_weights.len() > FEATURE_STAGES {
            return Err(Error::Config(format!(
                "at most {FEATURE_STAGES} perceptual layer weights, got {}",
                cfg.layer_weights.len()
            )));
        }
        if cfg.layer_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(
                "perceptual layer weights must be finite and ≥ 0".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut cin = 3;
        let mut weights = Vec::with_capacity(FEATURE_STAGES);
        for &cout in &FEATURE_WIDTHS {
            let std = (2.0 / (9 * cin) as f64).sqrt();
            let w: Vec<f64> = (0..cout * cin * 9)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    std * z
                })
                .collect();
            weights.push((Tensor::new(&[cout, cin, 3, 3], w)?, Tensor::zeros(&[cout])));
            cin = cout;
        }
        let mut layer_weights = cfg.layer_weights.clone();
        layer_weights.resize(FEATURE_STAGES, 0.0);
        Ok(FeatureExtractor {
            weights,
            layer_weights,
        })
    }

    pub fn layer_weights(&self) -> &[f64] {
        &self.layer_weights
    }

    pub fn stage_params(&self, stage: usize) -> (&Tensor, &Tensor) {
        let (w, b) = &self.weights[stage];
        (w, b)
    }

    /// Feature maps of the stages that carry a nonzero weight (others `None`).
    pub fn features(&self, g: &mut Graph, x: Var) -> Result<Vec<Option<Var>>> {
        let last = self.layer_weights.iter().rposition(|&w| w > 0.0);
        let mut out = vec![None; FEATURE_STAGES];
        let Some(last) = last else { return Ok(out) };
        let mut h = x;
        for (i, (w, b)) in self.weights.iter().enumerate().take(last + 1) {
            let wv = g.leaf(w.clone());
            let bv = g.leaf(b.clone());
            let c = g.conv2d(h, wv, Some(bv), [2, 2], [1, 1])?;
            h = g.leaky_relu(c, crate::nn::LEAKY_SLOPE)?;
            if self.layer_weights[i] > 0.0 {
                out[i] = Some(h);
            }
        }
        Ok(out)
    }
}

/// `‖gen − real‖₁ + Σ λ_l ‖φ_l(gen) − φ_l(real)‖₁`.
pub fn perceptual_loss(
    g: &mut Graph,
    gen: Var,
    real: Var,
    extractor: &FeatureExtractor,
) -> Result<Var> {
    let pixel = g.l1_distance(gen, real)?;
    let fg = extractor.features(g, gen)?;
    let fr = extractor.features(g, real)?;
    let mut total = pixel;
    for (i, (a, b)) in fg.into_iter().zip(fr).enumerate() {
        if let (Some(a), Some(b)) = (a, b) {
            let d = g.l1_distance(a, b)?;
            let d = g.scale(d, extractor.layer_weights[i])?;
            total = g.add(total, d)?;
        }
    }
    Ok(total)
}

/// The generator objective and its parts.
#[derive(Debug, Clone)]
pub struct GeneratorLoss {
    pub total: Var,
    pub perceptual: Var,
    pub adversarial: Vec<(Domain, Var)>,
}

/// Perceptual loss plus `Σ (D_π(gen) − c)²` for every enabled domain.
/// `gen_scores` must hold a score map for each domain in `enabled`.
#[allow(clippy::too_many_arguments)]
pub fn g_loss(
    g: &mut Graph,
    gen_scores: &[(Domain, Var)],
    enabled: &[Domain],
    gen: Var,
    real: Var,
    labels: &GanLabels,
    extractor: &FeatureExtractor,
    reduction: Reduction,
) -> Result<GeneratorLoss> {
    let perceptual = perceptual_loss(g, gen, real, extractor)?;
    let mut total = perceptual;
    let mut adversarial = Vec::with_capacity(enabled.len());
    for &d in enabled {
        let &(_, s) = gen_scores
            .iter()
            .find(|(k, _)| *k == d)
            .ok_or_else(|| Error::Config(format!("no score map for the {d} discriminator")))?;
        let term = lsgan_g_term(g, s, labels, reduction)?;
        total = g.add(total, term)?;
        adversarial.push((d, term));
    }
    Ok(GeneratorLoss {
        total,
        perceptual,
        adversarial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{dft2_magnitude, dwt2_haar, to_grayscale};
    use rand::Rng;

    fn rand_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_planar(3, h, w, (0..3 * h * w).map(|_| rng.random()).collect()).unwrap()
    }

    fn raster_of(im: &Image) -> RasterImage {
        RasterImage {
            pixels: im.clone(),
            depth: vec![1.0; im.height * im.width],
        }
    }

    #[test]
    fn domain_parsing() {
        assert_eq!(
            parse_domains("dwt, rgb").unwrap(),
            vec![Domain::Rgb, Domain::Dwt]
        );
        assert!(parse_domains("rgb,jpeg").is_err());
        assert!(parse_domains("").is_err());
    }

    #[test]
    fn assembled_shapes_and_channel_order() {
        let im = rand_image(12, 16, 1);
        let r = raster_of(&rand_image(12, 16, 2));
        let rgb = assemble_input_tensor(Domain::Rgb, &im, &r).unwrap();
        assert_eq!(rgb.shape(), &[1, 6, 12, 16]);
        assert_eq!(&rgb.data()[..3 * 12 * 16], &im.data[..]);
        assert_eq!(
            assemble_input_tensor(Domain::Fourier, &im, &r)
                .unwrap()
                .shape(),
            &[1, 2, 12, 16]
        );
        assert_eq!(
            assemble_input_tensor(Domain::Dwt, &im, &r).unwrap().shape(),
            &[1, 6, 6, 8]
        );
        let same = assemble_input_tensor(Domain::Rgb, &im, &raster_of(&im)).unwrap();
        assert_eq!(same.data()[..576], same.data()[576..]);
        assert!(
            assemble_input_tensor(Domain::Rgb, &im, &raster_of(&rand_image(12, 14, 3))).is_err()
        );
    }

    #[test]
    fn fourier_channel_matches_spectral_module() {
        let im = rand_image(10, 12, 4);
        let r = raster_of(&rand_image(10, 12, 5));
        let t = assemble_input_tensor(Domain::Fourier, &im, &r).unwrap();
        let spec = dft2_magnitude(&to_grayscale(&r.pixels).unwrap()).unwrap();
        let logm: Vec<f64> = spec.magnitude.iter().map(|v| v.ln_1p()).collect();
        let lo = logm.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = logm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (a, b) in t.data()[120..].iter().zip(&logm) {
            assert!((a - (b - lo) / (hi - lo)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_inputs_have_a_single_spectral_bin() {
        let im = Image::filled(3, 8, 8, 0.4);
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_image(&im));
        let s = log_spectrum(&mut g, x).unwrap();
        assert_eq!(
            g.value(s).data().iter().filter(|v| v.abs() > 1e-12).count(),
            1
        );
        let d = assemble_input_tensor(Domain::Dwt, &im, &raster_of(&im)).unwrap();
        assert!(d.data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn dwt_channels_match_spectral_module() {
        let im = rand_image(8, 10, 6);
        let r = raster_of(&rand_image(8, 10, 7));
        let t = assemble_input_tensor(Domain::Dwt, &im, &r).unwrap();
        let mut expected = Vec::new();
        for src in [&im, &r.pixels] {
            let b = dwt2_haar(&to_grayscale(src).unwrap());
            expected.extend(b.hl);
            expected.extend(b.lh);
            expected.extend(b.hh);
        }
        assert_eq!(t.data(), &expected[..]);
    }

    #[test]
    fn d_loss_hand_values() {
        let l = GanLabels::default();
        let half = PatchScoreMap::filled(2, 2, 0.5);
        assert!((lsgan_d_loss_value(&half, &half, &l).unwrap() - 2.0).abs() < 1e-10);
        let perfect = lsgan_d_loss_value(
            &PatchScoreMap::filled(3, 3, 1.0),
            &PatchScoreMap::filled(3, 3, 0.0),
            &l,
        )
        .unwrap();
        assert_eq!(perfect, 0.0);
        let real = PatchScoreMap::new(1, 3, vec![0.2, 0.9, -0.4]).unwrap();
        let fake = PatchScoreMap::new(1, 3, vec![0.7, 0.1, 1.3]).unwrap();
        let swapped = GanLabels {
            real: l.fake,
            fake: l.real,
            target: l.target,
        };
        assert_eq!(
            lsgan_d_loss_value(&real, &fake, &l).unwrap(),
            lsgan_d_loss_value(&fake, &real, &swapped).unwrap()
        );
        assert!(lsgan_d_loss_value(&real, &half, &l).is_err());
    }

    #[test]
    fn total_is_a_plain_sum() {
        let t = total_d_loss(&[
            (Domain::Rgb, 1.0),
            (Domain::Fourier, 2.0),
            (Domain::Dwt, 3.0),
        ]);
        assert_eq!(t, 6.0);
        assert_eq!(total_d_loss(&[(Domain::Rgb, 1.0), (Domain::Dwt, 3.0)]), 4.0);
        assert_eq!(total_d_loss(&[]), 0.0);
    }

    #[test]
    fn perceptual_identity_and_pixel_only() {
        let a = rand_image(16, 16, 8);
        let b = rand_image(16, 16, 9);
        let ex = FeatureExtractor::new(&PerceptualConfig::default()).unwrap();
        let mut g = Graph::new();
        let (va, vb) = (
            g.leaf(Tensor::from_image(&a)),
            g.leaf(Tensor::from_image(&b)),
        );
        let z = perceptual_loss(&mut g, va, va, &ex).unwrap();
        assert_eq!(g.value(z).item(), 0.0);
        let zero = FeatureExtractor::new(&PerceptualConfig {
            layer_weights: vec![0.0; 3],
            seed: 1,
        })
        .unwrap();
        let p = perceptual_loss(&mut g, va, vb, &zero).unwrap();
        let l1: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum();
        assert_eq!(g.value(p).item(), l1);
    }

    #[test]
    fn g_loss_hand_values_and_missing_domain() {
        let ex = FeatureExtractor::new(&PerceptualConfig::default()).unwrap();
        let l = GanLabels::default();
        let im = rand_image(8, 8, 10);
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_image(&im));
        let at_c = g.leaf(PatchScoreMap::filled(2, 2, 1.0).to_tensor());
        let half = g.leaf(PatchScoreMap::filled(2, 2, 0.5).to_tensor());
        let all = [Domain::Rgb, Domain::Fourier, Domain::Dwt];
        let scores: Vec<(Domain, Var)> = all.iter().map(|&d| (d, at_c)).collect();
        let zero = g_loss(&mut g, &scores, &all, x, x, &l, &ex, Reduction::Sum).unwrap();
        assert_eq!(g.value(zero.total).item(), 0.0);
        let scores: Vec<(Domain, Var)> = all.iter().map(|&d| (d, half)).collect();
        let gl = g_loss(&mut g, &scores, &all, x, x, &l, &ex, Reduction::Sum).unwrap();
        for (_, t) in &gl.adversarial {
            assert!((g.value(*t).item() - 1.0).abs() < 1e-10);
        }
        assert!((g.value(gl.total).item() - 3.0).abs() < 1e-10);
        let err = g_loss(&mut g, &scores[..1], &all, x, x, &l, &ex, Reduction::Sum).unwrap_err();
        assert!(err.to_string().contains("fourier"), "{err}");
        let none = g_loss(&mut g, &[], &[], x, x, &l, &ex, Reduction::Sum).unwrap();
        assert_eq!(none.total, none.perceptual);
    }

    #[test]
    fn mean_reduction_divides_by_patch_count() {
        let mut g = Graph::new();
        let s = g.leaf(PatchScoreMap::filled(2, 2, 0.5).to_tensor());
        let t = lsgan_g_term(&mut g, s, &GanLabels::default(), Reduction::Mean).unwrap();
        assert_eq!(g.value(t).item(), 0.25);
    }
}
