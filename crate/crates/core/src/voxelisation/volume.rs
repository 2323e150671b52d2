use std::fs;
use std::path::Path;

use super::{aggregate_voxel, assign_plane, VoxelConfig, VoxelSample};
use crate::error::{Error, Result};
use crate::geometry::{visible_points, CameraView, Frustum, PointCloud, FEATURE_DIM};
use crate::par;

/// `P × H × W × C` voxel features plus per-voxel weight sums and occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPlaneVolume {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Row-major `[p][h][w][c]`.
    pub features: Vec<f64>,
    /// Row-major `[p][h][w]`.
    pub weight_sums: Vec<f64>,
    pub occupancy: Vec<bool>,
}

const MAGIC: &[u8; 8] = b"MPVOL001";

impl MultiPlaneVolume {
    pub fn empty(planes: usize, height: usize, width: usize, channels: usize) -> Self {
        let n = planes * height * width;
        MultiPlaneVolume {
            planes,
            height,
            width,
            channels,
            features: vec![0.0; n * channels],
            weight_sums: vec![0.0; n],
            occupancy: vec![false; n],
        }
    }

    #[inline]
    pub fn voxel_index(&self, p: usize, h: usize, w: usize) -> usize {
        (p * self.height + h) * self.width + w
    }

    pub fn feature(&self, p: usize, h: usize, w: usize) -> &[f64] {
        let i = self.voxel_index(p, h, w) * self.channels;
        &self.features[i..i + self.channels]
    }

    pub fn is_occupied(&self, p: usize, h: usize, w: usize) -> bool {
        self.occupancy[self.voxel_index(p, h, w)]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Channel-major copy `[c][p][h][w]`, the generator's input layout.
    pub fn to_channel_major(&self) -> Vec<f64> {
        let n = self.planes * self.height * self.width;
        let mut out = vec![0.0; n * self.channels];
        for v in 0..n {
            for c in 0..self.channels {
                out[c * n + v] = self.features[v * self.channels + c];
            }
        }
        out
    }

    /// Same window in `(h, w)` across all planes.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<MultiPlaneVolume> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::arg(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds volume {}x{}",
                self.height, self.width
            )));
        }
        let mut out = MultiPlaneVolume::empty(self.planes, h, w, self.channels);
        for p in 0..self.planes {
            for y in 0..h {
                for x in 0..w {
                    let s = self.voxel_index(p, y0 + y, x0 + x);
                    let d = out.voxel_index(p, y, x);
                    out.weight_sums[d] = self.weight_sums[s];
                    out.occupancy[d] = self.occupancy[s];
                    out.features[d * self.channels..(d + 1) * self.channels].copy_from_slice(
                        &self.features[s * self.channels..(s + 1) * self.channels],
                    );
                }
            }
        }
        Ok(out)
    }

    /// Binary container: magic `MPVOL001`, `u32` P, H, W, C (little endian),
    /// features as `f32` in `[p][h][w][c]` order, weight sums as `f32`, then
    /// one occupancy byte per voxel.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.planes * self.height * self.width;
        let mut out = Vec::with_capacity(24 + 4 * n * (self.channels + 1) + n);
        out.extend_from_slice(MAGIC);
        for d in [self.planes, self.height, self.width, self.channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.features {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for &v in &self.weight_sums {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend(self.occupancy.iter().map(|&o| o as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("volume container: {m}"));
        if bytes.len() < 24 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic header"));
        }
        let dim = |i: usize| {
            u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize
        };
        let (planes, height, width, channels) = (dim(0), dim(1), dim(2), dim(3));
        let n = planes * height * width;
        let expect = 24 + 4 * n * channels + 4 * n + n;
        if bytes.len() != expect {
            return Err(bad(&format!(
                "expected {expect} bytes, found {}",
                bytes.len()
            )));
        }
        let f32s = |start: usize, count: usize| -> Vec<f64> {
            bytes[start..start + 4 * count]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        };
        let features = f32s(24, n * channels);
        let weight_sums = f32s(24 + 4 * n * channels, n);
        let occupancy = bytes[24 + 4 * n * (channels + 1)..]
            .iter()
            .map(|&b| b != 0)
            .collect();
        Ok(MultiPlaneVolume {
            planes,
            height,
            width,
            channels,
            features,
            weight_sums,
            occupancy,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Voxel sample with the raw data needed to normalise its distances.
#[derive(Clone, Copy)]
struct Member {
    px: f64,
    py: f64,
    depth: f64,
    point: usize,
}

/// Multi-plane voxelisation of the visible part of `cloud`.
///
/// Points are binned sequentially (a counting sort keyed by voxel), then each
/// occupied voxel is aggregated independently. Members of a voxel are ordered
/// by a total key before summation, so the output does not depend on input
/// point order or on the parallel schedule.
pub fn voxelise(
    cloud: &PointCloud,
    view: &CameraView,
    frustum: &Frustum,
    cfg: &VoxelConfig,
) -> Result<MultiPlaneVolume> {
    cfg.validate()?;
    let (h, w, planes) = (view.height(), view.width(), cfg.num_planes);
    let mut vol = MultiPlaneVolume::empty(planes, h, w, FEATURE_DIM);
    let visible = visible_points(cloud, view, frustum);
    if visible.is_empty() {
        log::warn!("voxelise: no visible points, volume is empty");
        return Ok(vol);
    }

    let mut keys = Vec::with_capacity(visible.len());
    for v in &visible {
        let p = assign_plane(v.projection.depth, frustum, planes, cfg.spacing)?;
        keys.push(vol.voxel_index(p, v.row, v.col));
    }
    let nvox = planes * h * w;
    let mut offsets = vec![0usize; nvox + 1];
    for &k in &keys {
        offsets[k + 1] += 1;
    }
    for i in 0..nvox {
        offsets[i + 1] += offsets[i];
    }
    let mut cursor = offsets.clone();
    let mut members = vec![
        Member {
            px: 0.0,
            py: 0.0,
            depth: 0.0,
            point: 0
        };
        visible.len()
    ];
    for (v, &k) in visible.iter().zip(&keys) {
        members[cursor[k]] = Member {
            px: v.projection.pixel.x,
            py: v.projection.pixel.y,
            depth: v.projection.depth,
            point: v.index,
        };
        cursor[k] += 1;
    }
    let occupied: Vec<usize> = (0..nvox).filter(|&k| offsets[k + 1] > offsets[k]).collect();

    let points = cloud.points();
    let results = par::map_slice(&occupied, |&k| {
        let mut group: Vec<Member> = members[offsets[k]..offsets[k + 1]].to_vec();
        let key = |m: &Member| {
            let p = &points[m.point];
            [
                m.depth,
                m.px,
                m.py,
                p.feature[0],
                p.feature[1],
                p.feature[2],
            ]
        };
        group.sort_by(|a, b| {
            key(a)
                .iter()
                .zip(key(b).iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let plane = k / (h * w);
        let row = (k / w) % h;
        let col = k % w;
        let (z_lo, z_hi) = super::plane_bounds(plane, frustum, planes, cfg.spacing);
        let z_center = 0.5 * (z_lo + z_hi);
        let thickness = z_hi - z_lo;
        let z_min = group.iter().map(|m| m.depth).fold(f64::INFINITY, f64::min);
        let z_max = group
            .iter()
            .map(|m| m.depth)
            .fold(f64::NEG_INFINITY, f64::max);
        let extent = z_max - z_min;
        let half_diag = 0.75f64.sqrt();
        let samples: Vec<VoxelSample> = group
            .iter()
            .map(|m| {
                let du = m.px - (col as f64 + 0.5);
                let dv = m.py - (row as f64 + 0.5);
                let dz = (m.depth - z_center) / thickness;
                let d1 = ((du * du + dv * dv + dz * dz).sqrt() / half_diag).min(1.0);
                let d2 = if extent > 0.0 {
                    ((m.depth - z_min) / extent).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                VoxelSample {
                    feature: points[m.point].feature,
                    d1,
                    d2,
                }
            })
            .collect();
        aggregate_voxel(&samples, cfg).expect("occupied voxel has members")
    });

    for (&k, agg) in occupied.iter().zip(results) {
        vol.occupancy[k] = true;
        vol.weight_sums[k] = agg.weight_sum;
        vol.features[k * FEATURE_DIM..(k + 1) * FEATURE_DIM].copy_from_slice(&agg.feature);
    }
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, CameraPose, Point3D};
    use nalgebra::Vector3;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn view(w: usize, h: usize) -> CameraView {
        CameraView::new(
            CameraIntrinsics::new(
                w as f64 * 0.8,
                w as f64 * 0.8,
                w as f64 / 2.0,
                h as f64 / 2.0,
                w,
                h,
            )
            .unwrap(),
            CameraPose::identity(),
        )
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                let z: f64 = rng.random_range(0.5..4.0);
                Point3D::new(
                    Vector3::new(
                        rng.random_range(-0.6..0.6) * z,
                        rng.random_range(-0.6..0.6) * z,
                        z,
                    ),
                    [rng.random(), rng.random(), rng.random()],
                )
            })
            .collect();
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn one_visible_point_one_voxel() {
        let c = PointCloud::new(vec![Point3D::new(
            Vector3::new(0.01, 0.02, 2.0),
            [0.1, 0.2, 0.3],
        )])
        .unwrap();
        let v = voxelise(
            &c,
            &view(16, 12),
            &Frustum::default(),
            &VoxelConfig::default(),
        )
        .unwrap();
        assert_eq!(v.occupied_count(), 1);
        let k = v.occupancy.iter().position(|&o| o).unwrap();
        assert_eq!(&v.features[k * 3..k * 3 + 3], &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn nothing_visible_gives_empty_volume() {
        let c =
            PointCloud::new(vec![Point3D::new(Vector3::new(0.0, 0.0, -2.0), [0.5; 3])]).unwrap();
        let v = voxelise(
            &c,
            &view(8, 8),
            &Frustum::default(),
            &VoxelConfig::default(),
        )
        .unwrap();
        assert_eq!(v.occupied_count(), 0);
        assert!(v.features.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shuffled_cloud_gives_identical_volume() {
        let c = random_cloud(4000, 5);
        let mut pts = c.points().to_vec();
        pts.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let s = PointCloud::new(pts).unwrap();
        let cfg = VoxelConfig {
            num_planes: 4,
            ..Default::default()
        };
        let a = voxelise(&c, &view(12, 10), &Frustum::default(), &cfg).unwrap();
        let b = voxelise(&s, &view(12, 10), &Frustum::default(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hyperparameters_do_not_matter_for_singletons() {
        // sparse cloud on a coarse plane split so most voxels hold one point
        let c = random_cloud(50, 2);
        let v = view(64, 64);
        let base = voxelise(&c, &v, &Frustum::default(), &VoxelConfig::default()).unwrap();
        let other = VoxelConfig {
            mu_f: 0.9,
            mu_s: 0.1,
            alpha: 3.0,
            beta: 0.5,
            ..Default::default()
        };
        let alt = voxelise(&c, &v, &Frustum::default(), &other).unwrap();
        assert_eq!(base.features, alt.features);
    }

    #[test]
    fn container_round_trip() {
        let c = random_cloud(2000, 8);
        let v = voxelise(
            &c,
            &view(10, 8),
            &Frustum::default(),
            &VoxelConfig {
                num_planes: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let back = MultiPlaneVolume::from_bytes(&v.to_bytes()).unwrap();
        assert_eq!(back.occupancy, v.occupancy);
        for (a, b) in back.features.iter().zip(&v.features) {
            assert_eq!(*a, (*b as f32) as f64);
        }
        assert!(MultiPlaneVolume::from_bytes(&v.to_bytes()[..30]).is_err());
    }

    #[test]
    fn occupied_voxels_have_positive_weight() {
        let c = random_cloud(3000, 4);
        let v = voxelise(
            &c,
            &view(10, 10),
            &Frustum::default(),
            &VoxelConfig::default(),
        )
        .unwrap();
        for k in 0..v.occupancy.len() {
            if v.occupancy[k] {
                assert!(v.weight_sums[k] > 0.0);
            } else {
                assert!(v.features[k * 3..k * 3 + 3].iter().all(|&x| x == 0.0));
            }
        }
    }
}
