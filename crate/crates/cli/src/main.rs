//! `pcrender` command-line tool.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcrender::config::RunConfig;
use pcrender::par::{self, Exec};

#[derive(Parser, Debug)]
#[command(
    name = "pcrender",
    version,
    about = "Neural point-cloud rendering toolkit"
)]
pub struct Cli {
    /// Run configuration file of `key = value` lines
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override any configuration key (repeatable); flags below win over this
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Run every kernel on the calling thread
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic scene as a data directory (cloud, poses, intrinsics, images)
    Scene(SceneCmd),
    /// Voxelise a point cloud into multi-plane volumes plus z-buffer rasters
    Voxelise(VoxeliseCmd),
    /// Render images from a trained checkpoint
    Render(RenderCmd),
    /// Train the generator and the patch discriminators
    Train(TrainCmd),
    /// Voxel colour error under positional noise, spatial-only vs noise-resistant
    NoiseAblation(AblationCmd),
    /// Fourier magnitude and Haar subbands of an image
    Spectra(SpectraCmd),
    /// PSNR, SSIM and sharpness of a generated image against a reference
    Metrics(MetricsCmd),
}

/// Built-in synthetic scene, used when no cloud is given.
#[derive(Args, Debug, Default)]
pub struct SceneArgs {
    /// Scene kind: box_room, checkerboard_walls or sphere_field [default: box_room]
    #[arg(long)]
    pub scene: Option<String>,
    /// Number of sampled points [default: 50000]
    #[arg(long)]
    pub points: Option<usize>,
    /// Number of camera views [default: 4]
    #[arg(long)]
    pub views: Option<usize>,
    /// Image width [default: 64]
    #[arg(long)]
    pub width: Option<usize>,
    /// Image height [default: 64]
    #[arg(long)]
    pub height: Option<usize>,
    /// Scene sampling seed [default: 0]
    #[arg(long)]
    pub scene_seed: Option<u64>,
}

/// Point cloud and cameras on disk.
#[derive(Args, Debug, Default)]
pub struct InputArgs {
    /// Directory holding cloud.ply, poses.txt and intrinsics.txt (as written by `scene`)
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// PLY point cloud
    #[arg(long, value_name = "FILE")]
    pub cloud: Option<PathBuf>,
    /// Pose file, one row-major 3x4 world-to-camera matrix per line
    #[arg(long, value_name = "FILE")]
    pub poses: Option<PathBuf>,
    /// Intrinsics file: `fx fy cx cy width height`
    #[arg(long, value_name = "FILE")]
    pub intrinsics: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct VoxelArgs {
    /// Depth planes P [default: 32]
    #[arg(long)]
    pub planes: Option<usize>,
    /// Feature-distance weight; 0 gives the spatial-only baseline [default: 0.25]
    #[arg(long)]
    pub mu_f: Option<f64>,
    /// Spatial-distance weight [default: 0.75]
    #[arg(long)]
    pub mu_s: Option<f64>,
    /// Exponent on the in-voxel distance term [default: 1]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Exponent on the in-plane distance term [default: 1]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Feature-distance floor [default: 0.001]
    #[arg(long)]
    pub epsilon_f: Option<f64>,
    /// Near clipping depth [default: 0.1]
    #[arg(long)]
    pub near: Option<f64>,
    /// Far clipping depth [default: 10]
    #[arg(long)]
    pub far: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SceneCmd {
    /// Output data directory
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Args, Debug)]
pub struct VoxeliseCmd {
    /// Output directory for `view_NNNN.mpv` volumes and `view_NNNN_raster.png`
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Only this view index [default: every view]
    #[arg(long)]
    pub view: Option<usize>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub voxel: VoxelArgs,
}

#[derive(Args, Debug)]
pub struct RenderCmd {
    /// Training checkpoint
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Output directory for `view_NNNN.png`
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub voxel: VoxelArgs,
}

#[derive(Args, Debug)]
pub struct TrainCmd {
    /// Run directory [default: runs/<timestamp>_seed<seed>]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Continue from this checkpoint; the run directory defaults to the one holding it
    #[arg(long, value_name = "FILE")]
    pub resume: Option<PathBuf>,
    /// Discriminator domains, comma separated, or `none` [default: rgb,fourier,dwt]
    #[arg(long)]
    pub domains: Option<String>,
    /// Training epochs, one pass over the views each [default: 64]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stop after this many steps [default: epochs x views]
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Training seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Learning rate before the decay epoch [default: 0.002]
    #[arg(long)]
    pub lr_initial: Option<f64>,
    /// Learning rate from the decay epoch on [default: 0.001]
    #[arg(long)]
    pub lr_after_decay: Option<f64>,
    /// Epoch at which the learning rate drops [default: 25]
    #[arg(long)]
    pub decay_epoch: Option<usize>,
    /// Crop height, a multiple of 4 [default: 64]
    #[arg(long)]
    pub crop_h: Option<usize>,
    /// Crop width, a multiple of 4 [default: 64]
    #[arg(long)]
    pub crop_w: Option<usize>,
    /// Steps between checkpoints, 0 for none [default: 50]
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Steps between snapshots, 0 for none [default: 50]
    #[arg(long)]
    pub snapshot_every: Option<u64>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub voxel: VoxelArgs,
}

#[derive(Args, Debug)]
pub struct AblationCmd {
    /// Output CSV
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Line plot of both curves
    #[arg(long, value_name = "FILE")]
    pub plot: Option<PathBuf>,
    /// Noise standard deviations in unit-cube units, comma separated
    #[arg(long, default_value = "0.002,0.005,0.01,0.02,0.05")]
    pub sigmas: String,
    /// View used for voxelisation
    #[arg(long, default_value_t = 0)]
    pub view: usize,
    /// Seed of the positional noise
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub voxel: VoxelArgs,
}

#[derive(Args, Debug)]
pub struct SpectraCmd {
    /// Input PNG
    #[arg(long, value_name = "FILE")]
    pub image: PathBuf,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsCmd {
    /// Generated image (PNG)
    pub generated: PathBuf,
    /// Reference image (PNG)
    pub reference: PathBuf,
}

pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<pcrender::Error> for Failure {
    fn from(e: pcrender::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Overrides = Vec<(&'static str, Option<String>)>;

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

impl SceneArgs {
    fn overrides(&self) -> Overrides {
        vec![
            ("scene", s(&self.scene)),
            ("points", s(&self.points)),
            ("views", s(&self.views)),
            ("width", s(&self.width)),
            ("height", s(&self.height)),
            ("scene_seed", s(&self.scene_seed)),
        ]
    }
}

impl InputArgs {
    fn overrides(&self) -> Overrides {
        let mut v = Vec::new();
        if let Some(d) = &self.data_dir {
            v.push((
                "cloud",
                Some(d.join(commands::CLOUD_FILE).display().to_string()),
            ));
            v.push((
                "poses",
                Some(d.join(commands::POSES_FILE).display().to_string()),
            ));
            v.push((
                "intrinsics",
                Some(d.join(commands::INTRINSICS_FILE).display().to_string()),
            ));
        }
        let p = |x: &Option<PathBuf>| x.as_ref().map(|p| p.display().to_string());
        v.push(("cloud", p(&self.cloud)));
        v.push(("poses", p(&self.poses)));
        v.push(("intrinsics", p(&self.intrinsics)));
        v
    }
}

impl VoxelArgs {
    fn overrides(&self) -> Overrides {
        vec![
            ("planes", s(&self.planes)),
            ("mu_f", s(&self.mu_f)),
            ("mu_s", s(&self.mu_s)),
            ("alpha", s(&self.alpha)),
            ("beta", s(&self.beta)),
            ("epsilon_f", s(&self.epsilon_f)),
            ("near", s(&self.near)),
            ("far", s(&self.far)),
        ]
    }
}

impl TrainCmd {
    fn overrides(&self) -> Overrides {
        let mut v = vec![
            ("domains", self.domains.clone()),
            ("epochs", s(&self.epochs)),
            ("max_steps", s(&self.max_steps)),
            ("seed", s(&self.seed)),
            ("lr_initial", s(&self.lr_initial)),
            ("lr_after_decay", s(&self.lr_after_decay)),
            ("decay_epoch", s(&self.decay_epoch)),
            ("crop_h", s(&self.crop_h)),
            ("crop_w", s(&self.crop_w)),
            ("checkpoint_every", s(&self.checkpoint_every)),
            ("snapshot_every", s(&self.snapshot_every)),
            (
                "out_dir",
                self.out_dir.as_ref().map(|p| p.display().to_string()),
            ),
        ];
        v.extend(self.input.overrides());
        v.extend(self.scene.overrides());
        v.extend(self.voxel.overrides());
        v
    }
}

/// Defaults, then the config file, then `--set`, then explicit flags.
fn build_config(cli: &Cli, overrides: Overrides) -> Result<RunConfig, Failure> {
    let usage = |e: pcrender::Error| match e {
        pcrender::Error::Io { .. } => Failure::Runtime(e.to_string()),
        other => Failure::Usage(other.to_string()),
    };
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(usage)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v).map_err(usage)?;
    }
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, &v).map_err(usage)?;
        }
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.sequential {
        par::set_exec(Exec::Sequential);
    }
    match &cli.command {
        Command::Scene(c) => commands::scene(&build_config(cli, c.scene.overrides())?, &c.out_dir),
        Command::Voxelise(c) => {
            let mut o = c.input.overrides();
            o.extend(c.scene.overrides());
            o.extend(c.voxel.overrides());
            commands::voxelise(&build_config(cli, o)?, &c.out_dir, c.view)
        }
        Command::Render(c) => {
            let mut o = c.input.overrides();
            o.extend(c.scene.overrides());
            o.extend(c.voxel.overrides());
            commands::render(&build_config(cli, o)?, &c.checkpoint, &c.out_dir)
        }
        Command::Train(c) => {
            commands::train(&build_config(cli, c.overrides())?, c.resume.as_deref())
        }
        Command::NoiseAblation(c) => {
            let sigmas = parse_sigmas(&c.sigmas)?;
            let mut o = c.input.overrides();
            o.extend(c.scene.overrides());
            o.extend(c.voxel.overrides());
            let cfg = build_config(cli, o)?;
            commands::noise_ablation(
                &cfg,
                &sigmas,
                c.view,
                c.noise_seed,
                &c.out,
                c.plot.as_deref(),
            )
        }
        Command::Spectra(c) => commands::spectra(&c.image, &c.out_dir),
        Command::Metrics(c) => commands::metrics(&c.generated, &c.reference),
    }
}

fn parse_sigmas(text: &str) -> Result<Vec<f64>, Failure> {
    let sigmas = text
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Failure::Usage(format!("bad sigma `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if sigmas.is_empty() {
        return Err(Failure::Usage("the sigma list is empty".into()));
    }
    Ok(sigmas)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
