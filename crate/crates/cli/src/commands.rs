use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use pcrender::config::RunConfig;
use pcrender::geometry::ply::{load_ply, write_ply, PlyFormat};
use pcrender::geometry::{
    frustum_cull, make_synthetic_scene, read_views, write_intrinsics, write_poses, CameraView,
    PointCloud,
};
use pcrender::image::Image;
use pcrender::metrics::{report, METRICS_CSV_HEADER};
use pcrender::spectral::{dft2_magnitude, dwt2_haar, to_grayscale, GrayImage};
use pcrender::training::{
    render_volume, run_training, RunLayout, TrainSample, TrainState, Trainer,
};
use pcrender::voxelisation::{
    noise_ablation as ablate, rasterize_zbuffer, voxelise as vox, write_ablation_csv,
};
use pcrender::Error;

use crate::plot::line_plot;
use crate::Failure;

pub const CLOUD_FILE: &str = "cloud.ply";
pub const POSES_FILE: &str = "poses.txt";
pub const INTRINSICS_FILE: &str = "intrinsics.txt";
pub const IMAGES_DIR: &str = "images";

type CmdResult = Result<(), Failure>;

fn mkdir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn view_name(i: usize) -> String {
    format!("view_{i:04}")
}

/// Cloud, views and (for synthetic scenes) ground-truth images.
struct Source {
    cloud: PointCloud,
    views: Vec<CameraView>,
    truth: Truth,
}

enum Truth {
    Scene(Box<pcrender::geometry::SyntheticScene>),
    /// `images/` next to the pose file.
    Dir(PathBuf),
}

impl Source {
    fn ground_truth(&self, i: usize) -> Result<Image, Failure> {
        match &self.truth {
            Truth::Scene(s) => Ok(s.ground_truth(&self.views[i])),
            Truth::Dir(d) => {
                let path = d.join(format!("{}.png", view_name(i)));
                let img = Image::load_png(&path)?;
                let v = &self.views[i];
                if (img.height, img.width) != (v.height(), v.width()) {
                    return Err(Failure::Runtime(format!(
                        "{} is {}x{}, the intrinsics say {}x{}",
                        path.display(),
                        img.width,
                        img.height,
                        v.width(),
                        v.height()
                    )));
                }
                Ok(img)
            }
        }
    }
}

fn load_source(cfg: &RunConfig) -> Result<Source, Failure> {
    match (&cfg.cloud, &cfg.poses, &cfg.intrinsics) {
        (None, None, None) => {
            let scene = make_synthetic_scene(&cfg.scene, cfg.scene_seed)?;
            Ok(Source {
                cloud: scene.cloud.clone(),
                views: scene.views.clone(),
                truth: Truth::Scene(Box::new(scene)),
            })
        }
        (Some(cloud), Some(poses), Some(k)) => {
            let cloud_data = load_ply(cloud)?;
            let views = read_views(poses, k)?;
            let dir = poses.parent().unwrap_or(Path::new(".")).join(IMAGES_DIR);
            Ok(Source {
                cloud: cloud_data,
                views,
                truth: Truth::Dir(dir),
            })
        }
        _ => Err(Failure::Usage(
            "a cloud on disk needs all of --cloud, --poses and --intrinsics (or --data-dir)".into(),
        )),
    }
}

fn pick_views(n: usize, only: Option<usize>) -> Result<Vec<usize>, Failure> {
    match only {
        Some(i) if i >= n => Err(Failure::Usage(format!(
            "view {i} out of range, there are {n} views"
        ))),
        Some(i) => Ok(vec![i]),
        None => Ok((0..n).collect()),
    }
}

pub fn scene(cfg: &RunConfig, out: &Path) -> CmdResult {
    let scene = make_synthetic_scene(&cfg.scene, cfg.scene_seed)?;
    let images = out.join(IMAGES_DIR);
    mkdir(&images)?;
    write_ply(
        &out.join(CLOUD_FILE),
        &scene.cloud,
        PlyFormat::BinaryLittleEndian,
    )?;
    let poses: Vec<_> = scene.views.iter().map(|v| v.pose).collect();
    write_poses(&out.join(POSES_FILE), &poses)?;
    write_intrinsics(&out.join(INTRINSICS_FILE), &scene.views[0].intrinsics)?;
    for (i, v) in scene.views.iter().enumerate() {
        scene
            .ground_truth(v)
            .save_png(&images.join(format!("{}.png", view_name(i))))?;
    }
    info!(
        "{} points, {} views written to {}",
        scene.cloud.len(),
        scene.views.len(),
        out.display()
    );
    Ok(())
}

pub fn voxelise(cfg: &RunConfig, out: &Path, only: Option<usize>) -> CmdResult {
    let src = load_source(cfg)?;
    mkdir(out)?;
    for i in pick_views(src.views.len(), only)? {
        let view = &src.views[i];
        let volume = vox(&src.cloud, view, &cfg.frustum, &cfg.voxel)?;
        let raster = rasterize_zbuffer(&src.cloud, view, &cfg.frustum);
        volume.save(&out.join(format!("{}.mpv", view_name(i))))?;
        raster
            .pixels
            .save_png(&out.join(format!("{}_raster.png", view_name(i))))?;
        info!(
            "view {i}: {} of {} voxels occupied",
            volume.occupied_count(),
            volume.occupancy.len()
        );
    }
    Ok(())
}

pub fn render(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> CmdResult {
    let bytes = fs::read(checkpoint).map_err(|e| Error::Io {
        path: checkpoint.to_path_buf(),
        source: e,
    })?;
    let generator = TrainState::from_bytes(&bytes, None)?.generator;
    let src = load_source(cfg)?;
    mkdir(out)?;
    for (i, view) in src.views.iter().enumerate() {
        let path = out.join(format!("{}.png", view_name(i)));
        let img = if frustum_cull(&src.cloud, view, &cfg.frustum).is_empty() {
            warn!("view {i}: no points visible, writing a black frame");
            Image::zeros(3, view.height(), view.width())
        } else {
            let volume = vox(&src.cloud, view, &cfg.frustum, &cfg.voxel)?;
            render_volume(&generator, &volume)?
        };
        img.save_png(&path)?;
    }
    info!("{} images written to {}", src.views.len(), out.display());
    Ok(())
}

fn default_run_dir(seed: u64) -> PathBuf {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    PathBuf::from("runs").join(format!("{stamp}_seed{seed}"))
}

pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> CmdResult {
    let root = match (&cfg.out_dir, resume) {
        (Some(d), _) => d.clone(),
        // checkpoints live in <run>/checkpoints/
        (None, Some(ckpt)) => ckpt
            .parent()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
        (None, None) => default_run_dir(cfg.train.seed),
    };
    let src = load_source(cfg)?;
    let mut samples = Vec::with_capacity(src.views.len());
    for (i, view) in src.views.iter().enumerate() {
        let volume = vox(&src.cloud, view, &cfg.frustum, &cfg.voxel)?;
        let raster = rasterize_zbuffer(&src.cloud, view, &cfg.frustum);
        samples.push(TrainSample::new(volume, src.ground_truth(i)?, raster)?);
    }
    let mut trainer = match resume {
        Some(ckpt) => Trainer::resume(cfg.train.clone(), samples, ckpt)?,
        None => Trainer::new(cfg.train.clone(), samples)?,
    };
    let layout = RunLayout::new(&root);
    layout.create()?;
    let mut saved = cfg.clone();
    saved.out_dir = Some(root.clone());
    let cfg_path = root.join("config.txt");
    fs::write(&cfg_path, saved.to_text()).map_err(|e| Error::Io {
        path: cfg_path,
        source: e,
    })?;
    info!(
        "training to step {} in {} (starting at step {})",
        trainer.total_steps(),
        root.display(),
        trainer.state().step
    );
    run_training(&mut trainer, &layout, |r| {
        if r.iter % 10 == 0 {
            info!(
                "step {}: g_total {:.4} g_percept {:.4}",
                r.iter, r.g_total, r.g_percept
            );
        }
    })?;
    println!("{}", root.display());
    Ok(())
}

pub fn noise_ablation(
    cfg: &RunConfig,
    sigmas: &[f64],
    view: usize,
    seed: u64,
    out: &Path,
    plot: Option<&Path>,
) -> CmdResult {
    let src = load_source(cfg)?;
    pick_views(src.views.len(), Some(view))?;
    let rows = ablate(
        &src.cloud,
        &src.views[view],
        &cfg.frustum,
        sigmas,
        &cfg.voxel,
        seed,
    )
    .map_err(|e| match e {
        Error::InvalidArgument(m) => Failure::Usage(m),
        other => other.into(),
    })?;
    write_ablation_csv(out, &rows)?;
    for r in &rows {
        info!(
            "sigma {}: spatial-only {:.6}, noise-resistant {:.6}",
            r.sigma, r.spatial_only_err, r.noise_resistant_err
        );
    }
    if let Some(p) = plot {
        let a: Vec<f64> = rows.iter().map(|r| r.spatial_only_err).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.noise_resistant_err).collect();
        line_plot(
            &[(&a, [0.85, 0.2, 0.15]), (&b, [0.15, 0.35, 0.85])],
            480,
            320,
        )
        .save_png(p)?;
    }
    Ok(())
}

fn dump_f32(path: &Path, data: &[f64]) -> Result<(), Failure> {
    let bytes: Vec<u8> = data
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    fs::write(path, bytes).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn write_band(dir: &Path, name: &str, g: &GrayImage, display: &GrayImage) -> CmdResult {
    display
        .normalized_for_display()
        .save_png(&dir.join(format!("{name}.png")))?;
    dump_f32(
        &dir.join(format!("{name}_{}x{}.f32", g.height, g.width)),
        &g.data,
    )
}

/// Writes the centred Fourier magnitude (shown as `log(1 + m)`) and the four
/// Haar subbands, each as a display PNG plus a raw little-endian `f32` dump.
pub fn spectra(image: &Path, out: &Path) -> CmdResult {
    let gray = to_grayscale(&Image::load_png(image)?)?;
    mkdir(out)?;
    let mag = dft2_magnitude(&gray)?.to_gray();
    let mut shown = mag.clone();
    shown.data.iter_mut().for_each(|v| *v = v.ln_1p());
    write_band(out, "magnitude", &mag, &shown)?;
    let d = dwt2_haar(&gray);
    for (name, band) in [("ll", &d.ll), ("hl", &d.hl), ("lh", &d.lh), ("hh", &d.hh)] {
        let g = GrayImage::new(d.height, d.width, band.clone())?;
        write_band(out, name, &g, &g)?;
    }
    Ok(())
}

pub fn metrics(generated: &Path, reference: &Path) -> CmdResult {
    let r = report(&Image::load_png(generated)?, &Image::load_png(reference)?)?;
    println!("{METRICS_CSV_HEADER}");
    println!("{}", r.csv_row());
    Ok(())
}
