//! Synthetic corruption of a point cloud and the spatial-vs-feature weighting
//! comparison built on it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{voxelise, MultiPlaneVolume, VoxelConfig};
use crate::error::{Error, Result};
use crate::geometry::{frustum_cull, CameraView, Frustum, Point3D, PointCloud};
use crate::par;

pub const ABLATION_CSV_HEADER: &str = "noise_std,spatial_only_err,noise_resistant_err";

/// Default positional noise sweep (unit-cube units).
pub const DEFAULT_SIGMAS: [f64; 5] = [0.002, 0.005, 0.01, 0.02, 0.05];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    /// Std of the Gaussian position offset, in max-normalised units.
    pub sigma_pos: f64,
    /// Colour of injected points ~ N(mean, std) per channel on the 0–255 scale.
    pub color_mean: f64,
    pub color_std: f64,
    /// When false, injected points copy their parent's colour.
    pub color_noise: bool,
}

impl Corruption {
    pub fn new(sigma_pos: f64) -> Self {
        Corruption {
            sigma_pos,
            color_mean: 128.0,
            color_std: 100.0,
            color_noise: true,
        }
    }
}

pub fn corrupt_cloud(cloud: &PointCloud, sigma_pos: f64, seed: u64) -> Result<PointCloud> {
    corrupt_cloud_with(cloud, &Corruption::new(sigma_pos), seed)
}

/// Returns the `N` original points followed by `N` injected ones. Injected
/// point `i` draws from its own ChaCha stream (`seed`, stream `i`), so the
/// result is identical however the samples are scheduled.
pub fn corrupt_cloud_with(cloud: &PointCloud, c: &Corruption, seed: u64) -> Result<PointCloud> {
    if !(c.sigma_pos >= 0.0) || !c.sigma_pos.is_finite() {
        return Err(Error::arg(format!(
            "sigma_pos must be >= 0 (got {})",
            c.sigma_pos
        )));
    }
    if !(c.color_std >= 0.0) {
        return Err(Error::arg("color_std must be >= 0"));
    }
    let n = cloud.len();
    if n == 0 {
        return Ok(PointCloud::empty());
    }
    let src = cloud.points();
    let pos_noise = Normal::new(0.0, c.sigma_pos).expect("validated std");
    let col_noise = Normal::new(c.color_mean, c.color_std).expect("validated std");
    let injected = par::map_range(n, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let parent = &src[rng.random_range(0..n)];
        let offset = Vector3::new(
            pos_noise.sample(&mut rng),
            pos_noise.sample(&mut rng),
            pos_noise.sample(&mut rng),
        );
        let feature = if c.color_noise {
            let mut f = [0.0; 3];
            for v in &mut f {
                *v = col_noise.sample(&mut rng).clamp(0.0, 255.0) / 255.0;
            }
            f
        } else {
            parent.feature
        };
        Point3D::new(parent.position + offset, feature)
    });
    let mut points = Vec::with_capacity(2 * n);
    points.extend_from_slice(src);
    points.extend(injected);
    PointCloud::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub sigma: f64,
    pub spatial_only_err: f64,
    pub noise_resistant_err: f64,
}

/// Mean L1 colour difference over voxels occupied in both volumes.
fn mean_color_error(reference: &MultiPlaneVolume, noisy: &MultiPlaneVolume) -> f64 {
    let c = reference.channels;
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..reference.occupancy.len() {
        if reference.occupancy[k] && noisy.occupancy[k] {
            sum += (0..c)
                .map(|ch| (reference.features[k * c + ch] - noisy.features[k * c + ch]).abs())
                .sum::<f64>();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Voxel colour error under increasing positional noise, comparing the
/// spatial-only weighting (`μ_f = 0`) with the full weighting in `cfg`.
///
/// The cloud is max-normalised into the unit cube first (view and frustum are
/// mapped along), so every sigma is in unit-cube units. Each aggregator is
/// compared against its own voxelisation of the clean cloud.
pub fn noise_ablation(
    cloud: &PointCloud,
    view: &CameraView,
    frustum: &Frustum,
    sigmas: &[f64],
    cfg: &VoxelConfig,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    if sigmas.is_empty() {
        return Err(Error::arg("sigma list is empty"));
    }
    if sigmas.iter().any(|s| !(*s >= 0.0)) || sigmas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::arg(
            "sigmas must be non-negative and sorted ascending",
        ));
    }
    cfg.validate()?;
    if frustum_cull(cloud, view, frustum).is_empty() {
        return Err(Error::arg("the view sees no points"));
    }
    let (norm_cloud, norm) = cloud.max_normalized();
    let nview = norm.apply_view(view);
    let nfrustum = norm.apply_frustum(frustum);
    let spatial = cfg.spatial_only();
    let (ref_spatial, ref_full) = par::join(
        || voxelise(&norm_cloud, &nview, &nfrustum, &spatial),
        || voxelise(&norm_cloud, &nview, &nfrustum, cfg),
    );
    let (ref_spatial, ref_full) = (ref_spatial?, ref_full?);
    let rows = par::map_slice(sigmas, |&sigma| -> Result<AblationRow> {
        let noisy = corrupt_cloud(&norm_cloud, sigma, seed)?;
        let a = voxelise(&noisy, &nview, &nfrustum, &spatial)?;
        let b = voxelise(&noisy, &nview, &nfrustum, cfg)?;
        Ok(AblationRow {
            sigma,
            spatial_only_err: mean_color_error(&ref_spatial, &a),
            noise_resistant_err: mean_color_error(&ref_full, &b),
        })
    });
    rows.into_iter().collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(ABLATION_CSV_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{}",
            r.sigma, r.spatial_only_err, r.noise_resistant_err
        )
        .unwrap();
    }
    s
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    fs::write(path, ablation_csv(rows)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_synthetic_scene, SceneSpec};

    fn small_cloud() -> PointCloud {
        let spec = SceneSpec::new("box_room", 2000).unwrap();
        make_synthetic_scene(&spec, 3).unwrap().cloud
    }

    #[test]
    fn output_doubles_and_keeps_originals() {
        let c = small_cloud();
        let out = corrupt_cloud(&c, 0.01, 1).unwrap();
        assert_eq!(out.len(), 2 * c.len());
        assert_eq!(&out.points()[..c.len()], c.points());
    }

    #[test]
    fn zero_sigma_duplicates_positions_with_random_colors() {
        let c = small_cloud();
        let out = corrupt_cloud(&c, 0.0, 4).unwrap();
        let originals: std::collections::HashSet<[u64; 3]> = c
            .points()
            .iter()
            .map(|p| {
                [
                    p.position.x.to_bits(),
                    p.position.y.to_bits(),
                    p.position.z.to_bits(),
                ]
            })
            .collect();
        let injected = &out.points()[c.len()..];
        assert!(injected.iter().all(|p| originals.contains(&[
            p.position.x.to_bits(),
            p.position.y.to_bits(),
            p.position.z.to_bits()
        ])));
        let mean: f64 = injected.iter().map(|p| p.feature[0]).sum::<f64>() / injected.len() as f64;
        // clamped N(128, 100) on [0, 255] has mean close to 128/255
        assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
        assert!(injected
            .iter()
            .all(|p| p.feature.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn corruption_is_deterministic_and_validates_sigma() {
        let c = small_cloud();
        assert_eq!(
            corrupt_cloud(&c, 0.02, 9).unwrap(),
            corrupt_cloud(&c, 0.02, 9).unwrap()
        );
        assert_ne!(
            corrupt_cloud(&c, 0.02, 9).unwrap(),
            corrupt_cloud(&c, 0.02, 10).unwrap()
        );
        assert!(corrupt_cloud(&c, -0.1, 9).is_err());
    }

    #[test]
    fn csv_header_is_exact() {
        let rows = [AblationRow {
            sigma: 0.01,
            spatial_only_err: 0.2,
            noise_resistant_err: 0.1,
        }];
        let s = ablation_csv(&rows);
        assert_eq!(
            s.lines().next().unwrap(),
            "noise_std,spatial_only_err,noise_resistant_err"
        );
        assert_eq!(s.lines().count(), 2);
    }

    #[test]
    fn ablation_rejects_bad_sigma_lists() {
        let spec = SceneSpec::new("box_room", 2000).unwrap();
        let s = make_synthetic_scene(&spec, 3).unwrap();
        let cfg = VoxelConfig::default();
        let f = Frustum::default();
        assert!(noise_ablation(&s.cloud, &s.views[0], &f, &[], &cfg, 0).is_err());
        assert!(noise_ablation(&s.cloud, &s.views[0], &f, &[0.02, 0.01], &cfg, 0).is_err());
    }
}
