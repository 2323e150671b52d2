//! Flat `key = value` run configuration shared by the command-line tools.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected with
//! the closest known key as a suggestion.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::adversarial::{parse_domains, Domain, Reduction};
use crate::error::{Error, Result};
use crate::geometry::{Frustum, SceneKind, SceneSpec};
use crate::training::TrainConfig;
use crate::voxelisation::{PlaneSpacing, VoxelConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub voxel: VoxelConfig,
    pub frustum: Frustum,
    pub scene: SceneSpec,
    pub scene_seed: u64,
    pub train: TrainConfig,
    pub cloud: Option<PathBuf>,
    pub poses: Option<PathBuf>,
    pub intrinsics: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            voxel: VoxelConfig::default(),
            frustum: Frustum::default(),
            scene: SceneSpec::new("box_room", 50_000).expect("built-in scene"),
            scene_seed: 0,
            train: TrainConfig::default(),
            cloud: None,
            poses: None,
            intrinsics: None,
            out_dir: None,
        }
    }
}

/// Every accepted key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "planes",
    "mu_f",
    "mu_s",
    "alpha",
    "beta",
    "epsilon_f",
    "spacing",
    "near",
    "far",
    "scene",
    "points",
    "views",
    "width",
    "height",
    "scene_seed",
    "epochs",
    "max_steps",
    "lr_initial",
    "lr_after_decay",
    "decay_epoch",
    "crop_h",
    "crop_w",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "seed",
    "domains",
    "real_label",
    "fake_label",
    "target_label",
    "perceptual_weights",
    "perceptual_seed",
    "reduction",
    "gen_widths",
    "instance_norm",
    "checkpoint_every",
    "snapshot_every",
    "cloud",
    "poses",
    "intrinsics",
    "out_dir",
];

/// The known key closest to `key` by edit distance.
pub fn suggest_key(key: &str) -> &'static str {
    KEYS.iter()
        .min_by_key(|k| strsim::levenshtein(key, k))
        .copied()
        .expect("non-empty key list")
}

fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse()
        .map_err(|_| format!("`{key}`: cannot parse `{v}`"))
}

fn list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|t| num(key, t.trim())).collect()
}

fn flag(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("`{key}`: expected true or false, got `{v}`")),
    }
}

fn spacing_name(s: PlaneSpacing) -> &'static str {
    match s {
        PlaneSpacing::UniformDepth => "uniform_depth",
        PlaneSpacing::UniformDisparity => "uniform_disparity",
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Sets one key. Values are parsed; cross-field checks happen in
    /// [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_inner(key, value.trim()).map_err(Error::Config)
    }

    fn set_inner(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let t = &mut self.train;
        match key {
            "planes" => self.voxel.num_planes = num(key, v)?,
            "mu_f" => self.voxel.mu_f = num(key, v)?,
            "mu_s" => self.voxel.mu_s = num(key, v)?,
            "alpha" => self.voxel.alpha = num(key, v)?,
            "beta" => self.voxel.beta = num(key, v)?,
            "epsilon_f" => self.voxel.epsilon_f = num(key, v)?,
            "spacing" => {
                self.voxel.spacing = match v {
                    "uniform_depth" => PlaneSpacing::UniformDepth,
                    "uniform_disparity" => PlaneSpacing::UniformDisparity,
                    _ => {
                        return Err(format!(
                            "`spacing`: expected uniform_depth or uniform_disparity, got `{v}`"
                        ))
                    }
                }
            }
            "near" => self.frustum.near = num(key, v)?,
            "far" => self.frustum.far = num(key, v)?,
            "scene" => self.scene.kind = v.parse::<SceneKind>().map_err(|e| e.to_string())?,
            "points" => self.scene.num_points = num(key, v)?,
            "views" => self.scene.num_views = num(key, v)?,
            "width" => self.scene.width = num(key, v)?,
            "height" => self.scene.height = num(key, v)?,
            "scene_seed" => self.scene_seed = num(key, v)?,
            "epochs" => t.epochs = num(key, v)?,
            "max_steps" => {
                t.max_steps = if v == "none" {
                    None
                } else {
                    Some(num(key, v)?)
                }
            }
            "lr_initial" => t.lr_initial = num(key, v)?,
            "lr_after_decay" => t.lr_after_decay = num(key, v)?,
            "decay_epoch" => t.decay_epoch = num(key, v)?,
            "crop_h" => t.crop_h = num(key, v)?,
            "crop_w" => t.crop_w = num(key, v)?,
            "adam_beta1" => t.beta1 = num(key, v)?,
            "adam_beta2" => t.beta2 = num(key, v)?,
            "adam_eps" => t.eps = num(key, v)?,
            "seed" => t.seed = num(key, v)?,
            "domains" => {
                t.enabled_domains = if v == "none" {
                    Vec::new()
                } else {
                    parse_domains(v).map_err(|e| e.to_string())?
                }
            }
            "real_label" => t.labels.real = num(key, v)?,
            "fake_label" => t.labels.fake = num(key, v)?,
            "target_label" => t.labels.target = num(key, v)?,
            "perceptual_weights" => t.perceptual.layer_weights = list(key, v)?,
            "perceptual_seed" => t.perceptual.seed = num(key, v)?,
            "reduction" => t.reduction = v.parse::<Reduction>().map_err(|e| e.to_string())?,
            "gen_widths" => {
                let w: Vec<usize> = list(key, v)?;
                t.generator_widths = w
                    .try_into()
                    .map_err(|_| "`gen_widths`: expected three values".to_string())?;
            }
            "instance_norm" => t.instance_norm = flag(key, v)?,
            "checkpoint_every" => t.checkpoint_every = num(key, v)?,
            "snapshot_every" => t.snapshot_every = num(key, v)?,
            "cloud" => self.cloud = Some(PathBuf::from(v)),
            "poses" => self.poses = Some(PathBuf::from(v)),
            "intrinsics" => self.intrinsics = Some(PathBuf::from(v)),
            "out_dir" => self.out_dir = Some(PathBuf::from(v)),
            _ => {
                return Err(format!(
                    "unknown key `{key}`; did you mean `{}`?",
                    suggest_key(key)
                ))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(m) => parse_err(m),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.voxel.validate()?;
        Frustum::new(self.frustum.near, self.frustum.far)?;
        self.train.validate()?;
        if self.scene.num_points == 0
            || self.scene.num_views == 0
            || self.scene.width == 0
            || self.scene.height == 0
        {
            return Err(Error::Config(
                "scene points, views, width and height must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Every key with its current value, one per line; loading the result
    /// reproduces this configuration.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut out = String::new();
        for &key in KEYS {
            let value: Option<String> = match key {
                "planes" => Some(self.voxel.num_planes.to_string()),
                "mu_f" => Some(format!("{:?}", self.voxel.mu_f)),
                "mu_s" => Some(format!("{:?}", self.voxel.mu_s)),
                "alpha" => Some(format!("{:?}", self.voxel.alpha)),
                "beta" => Some(format!("{:?}", self.voxel.beta)),
                "epsilon_f" => Some(format!("{:?}", self.voxel.epsilon_f)),
                "spacing" => Some(spacing_name(self.voxel.spacing).into()),
                "near" => Some(format!("{:?}", self.frustum.near)),
                "far" => Some(format!("{:?}", self.frustum.far)),
                "scene" => Some(self.scene.kind.name().into()),
                "points" => Some(self.scene.num_points.to_string()),
                "views" => Some(self.scene.num_views.to_string()),
                "width" => Some(self.scene.width.to_string()),
                "height" => Some(self.scene.height.to_string()),
                "scene_seed" => Some(self.scene_seed.to_string()),
                "epochs" => Some(t.epochs.to_string()),
                "max_steps" => Some(t.max_steps.map_or("none".into(), |s| s.to_string())),
                "lr_initial" => Some(format!("{:?}", t.lr_initial)),
                "lr_after_decay" => Some(format!("{:?}", t.lr_after_decay)),
                "decay_epoch" => Some(t.decay_epoch.to_string()),
                "crop_h" => Some(t.crop_h.to_string()),
                "crop_w" => Some(t.crop_w.to_string()),
                "adam_beta1" => Some(format!("{:?}", t.beta1)),
                "adam_beta2" => Some(format!("{:?}", t.beta2)),
                "adam_eps" => Some(format!("{:?}", t.eps)),
                "seed" => Some(t.seed.to_string()),
                "domains" => Some(if t.enabled_domains.is_empty() {
                    "none".into()
                } else {
                    join(
                        &t.enabled_domains
                            .iter()
                            .map(|d| d.name())
                            .collect::<Vec<_>>(),
                    )
                }),
                "real_label" => Some(format!("{:?}", t.labels.real)),
                "fake_label" => Some(format!("{:?}", t.labels.fake)),
                "target_label" => Some(format!("{:?}", t.labels.target)),
                "perceptual_weights" => Some(join(
                    &t.perceptual
                        .layer_weights
                        .iter()
                        .map(|w| format!("{w:?}"))
                        .collect::<Vec<_>>(),
                )),
                "perceptual_seed" => Some(t.perceptual.seed.to_string()),
                "reduction" => Some(
                    match t.reduction {
                        Reduction::Sum => "sum",
                        Reduction::Mean => "mean",
                    }
                    .into(),
                ),
                "gen_widths" => Some(join(&t.generator_widths)),
                "instance_norm" => Some(t.instance_norm.to_string()),
                "checkpoint_every" => Some(t.checkpoint_every.to_string()),
                "snapshot_every" => Some(t.snapshot_every.to_string()),
                "cloud" => path(&self.cloud),
                "poses" => path(&self.poses),
                "intrinsics" => path(&self.intrinsics),
                "out_dir" => path(&self.out_dir),
                _ => unreachable!("key list and writer agree"),
            };
            if let Some(v) = value {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }

    pub fn domains(&self) -> &[Domain] {
        &self.train.enabled_domains
    }
}
