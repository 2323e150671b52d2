//! Noise-resistant multi-plane voxelisation.
//!
//! The visible frustum is split into `P` depth planes and the image grid into
//! pixels; every visible point lands in exactly one `(plane, row, col)` voxel.
//! A voxel's feature is the weighted mean of its points, each weighted by
//! `μ_f·D_f + μ_s·D_s` with
//!
//! * `D_s = (1 − D1)^α (1 + D2)^β`, `D1` the distance to the voxel centre
//!   normalised by the cell half-diagonal (in pixel/plane units), `D2` the
//!   depth offset from the voxel's nearest point normalised by the voxel's
//!   depth extent;
//! * `D_f = 1 / max(‖f − f̄‖₁, ε_f)`, `f̄` the unweighted mean colour of the voxel.
//!
//! Setting `μ_f = 0` gives the purely spatial weighting used as the ablation
//! baseline.

mod noise;
mod raster;
mod volume;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Feature, Frustum, FEATURE_DIM};

pub use noise::{
    ablation_csv, corrupt_cloud, corrupt_cloud_with, noise_ablation, write_ablation_csv,
    AblationRow, Corruption, ABLATION_CSV_HEADER, DEFAULT_SIGMAS,
};
pub use raster::{rasterize_zbuffer, RasterImage};
pub use volume::{voxelise, MultiPlaneVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneSpacing {
    UniformDepth,
    UniformDisparity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelConfig {
    pub num_planes: usize,
    pub mu_f: f64,
    pub mu_s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon_f: f64,
    pub spacing: PlaneSpacing,
}

impl Default for VoxelConfig {
    fn default() -> Self {
        VoxelConfig {
            num_planes: 32,
            mu_f: 0.25,
            mu_s: 0.75,
            alpha: 1.0,
            beta: 1.0,
            epsilon_f: 1e-3,
            spacing: PlaneSpacing::UniformDepth,
        }
    }
}

impl VoxelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_planes == 0 {
            return Err(Error::Config("num_planes must be at least 1".into()));
        }
        if !(self.mu_f >= 0.0 && self.mu_s >= 0.0 && self.mu_f + self.mu_s > 0.0) {
            return Err(Error::Config(format!(
                "need mu_f, mu_s >= 0 with a positive sum (got {}, {})",
                self.mu_f, self.mu_s
            )));
        }
        if !(self.epsilon_f > 0.0) {
            return Err(Error::Config("epsilon_f must be positive".into()));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::Config("alpha and beta must be finite".into()));
        }
        Ok(())
    }

    /// The spatial-only baseline: same config with the feature term removed.
    pub fn spatial_only(&self) -> Self {
        VoxelConfig { mu_f: 0.0, ..*self }
    }
}

/// Plane index of a depth inside `[near, far]`; `far` itself maps to `P − 1`.
pub fn assign_plane(
    depth: f64,
    frustum: &Frustum,
    num_planes: usize,
    spacing: PlaneSpacing,
) -> Result<usize> {
    if !frustum.contains_depth(depth) {
        return Err(Error::arg(format!(
            "depth {depth} outside frustum [{}, {}]; cull first",
            frustum.near, frustum.far
        )));
    }
    let t = match spacing {
        PlaneSpacing::UniformDepth => (depth - frustum.near) / (frustum.far - frustum.near),
        PlaneSpacing::UniformDisparity => {
            (1.0 / frustum.near - 1.0 / depth) / (1.0 / frustum.near - 1.0 / frustum.far)
        }
    };
    let p = (num_planes as f64 * t).floor();
    Ok((p.max(0.0) as usize).min(num_planes - 1))
}

/// Depth interval `[lo, hi)` covered by plane `p`.
pub fn plane_bounds(
    p: usize,
    frustum: &Frustum,
    num_planes: usize,
    spacing: PlaneSpacing,
) -> (f64, f64) {
    let edge = |k: usize| {
        let t = k as f64 / num_planes as f64;
        match spacing {
            PlaneSpacing::UniformDepth => frustum.near + t * (frustum.far - frustum.near),
            PlaneSpacing::UniformDisparity => {
                let inv = 1.0 / frustum.near - t * (1.0 / frustum.near - 1.0 / frustum.far);
                1.0 / inv
            }
        }
    };
    (edge(p), edge(p + 1))
}

/// `(1 − D1)^α (1 + D2)^β` for pre-normalised `D1, D2 ∈ [0, 1]`.
pub fn spatial_distance(d1: f64, d2: f64, alpha: f64, beta: f64) -> f64 {
    (1.0 - d1).max(0.0).powf(alpha) * (1.0 + d2).powf(beta)
}

/// `1 / max(‖f − f̄‖₁, ε)`.
pub fn feature_distance(f: &[f64], f_bar: &[f64], epsilon_f: f64) -> f64 {
    debug_assert_eq!(f.len(), f_bar.len());
    let l1: f64 = f.iter().zip(f_bar).map(|(a, b)| (a - b).abs()).sum();
    1.0 / l1.max(epsilon_f)
}

/// One point inside a voxel with its normalised spatial distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelSample {
    pub feature: Feature,
    pub d1: f64,
    pub d2: f64,
}

/// Aggregated feature and weight sum of one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub feature: Feature,
    pub weight_sum: f64,
}

/// Weighted mean of the samples; `None` for an empty (unoccupied) voxel.
///
/// If every weight vanishes (only possible with `μ_f = 0` and all points on
/// cell corners) the unweighted mean is returned.
pub fn aggregate_voxel(samples: &[VoxelSample], cfg: &VoxelConfig) -> Option<Aggregate> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let mut f_bar = [0.0; FEATURE_DIM];
    for s in samples {
        for c in 0..FEATURE_DIM {
            f_bar[c] += s.feature[c];
        }
    }
    for v in &mut f_bar {
        *v /= n;
    }
    let mut acc = [0.0; FEATURE_DIM];
    let mut wsum = 0.0;
    for s in samples {
        let mut w = cfg.mu_s * spatial_distance(s.d1, s.d2, cfg.alpha, cfg.beta);
        if cfg.mu_f > 0.0 {
            w += cfg.mu_f * feature_distance(&s.feature, &f_bar, cfg.epsilon_f);
        }
        for c in 0..FEATURE_DIM {
            acc[c] += w * s.feature[c];
        }
        wsum += w;
    }
    if wsum <= 0.0 {
        return Some(Aggregate {
            feature: f_bar,
            weight_sum: 0.0,
        });
    }
    let mut feature = [0.0; FEATURE_DIM];
    for c in 0..FEATURE_DIM {
        // clamp guards round-off pushing a convex combination past its hull
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s.feature[c]), hi.max(s.feature[c]))
            });
        feature[c] = (acc[c] / wsum).clamp(lo, hi);
    }
    Some(Aggregate {
        feature,
        weight_sum: wsum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fr(near: f64, far: f64) -> Frustum {
        Frustum { near, far }
    }

    #[test]
    fn plane_binning_examples() {
        let f = fr(0.1, 10.0);
        assert_eq!(
            assign_plane(0.1, &f, 32, PlaneSpacing::UniformDepth).unwrap(),
            0
        );
        assert_eq!(
            assign_plane(10.0, &f, 32, PlaneSpacing::UniformDepth).unwrap(),
            31
        );
        // near = 0 is not a legal frustum, but the binning formula itself is hand-checked here
        let f0 = Frustum {
            near: 0.0,
            far: 10.0,
        };
        assert_eq!(
            assign_plane(5.0, &f0, 32, PlaneSpacing::UniformDepth).unwrap(),
            16
        );
        assert!(assign_plane(10.5, &f, 32, PlaneSpacing::UniformDepth).is_err());
        assert!(assign_plane(0.05, &f, 32, PlaneSpacing::UniformDepth).is_err());
    }

    #[test]
    fn disparity_planes_are_monotone_and_cover_range() {
        let f = fr(0.5, 8.0);
        let mut last = 0;
        for i in 0..=1000 {
            let d = 0.5 + 7.5 * i as f64 / 1000.0;
            let p = assign_plane(d, &f, 16, PlaneSpacing::UniformDisparity).unwrap();
            assert!(p >= last);
            let (lo, hi) = plane_bounds(p, &f, 16, PlaneSpacing::UniformDisparity);
            assert!(d >= lo - 1e-9 && (d < hi + 1e-9));
            last = p;
        }
        assert_eq!(last, 15);
    }

    #[test]
    fn spatial_distance_examples() {
        assert_eq!(spatial_distance(0.0, 0.0, 1.0, 1.0), 1.0);
        assert_eq!(spatial_distance(1.0, 0.3, 1.0, 1.0), 0.0);
        assert!((spatial_distance(0.5, 0.5, 1.0, 1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn feature_distance_examples() {
        let f = [0.2, 0.4, 0.6];
        assert!((feature_distance(&f, &f, 1e-3) - 1000.0).abs() < 1e-9);
        assert!((feature_distance(&[1.0, 1.0, 0.0], &[0.0, 0.0, 0.0], 1e-3) - 0.5).abs() < 1e-15);
        assert!((feature_distance(&[0.25, 0.0, 0.25], &[0.0; 3], 1e-3) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_point_returns_its_feature() {
        let s = [VoxelSample {
            feature: [0.3, 0.6, 0.9],
            d1: 0.4,
            d2: 0.0,
        }];
        let a = aggregate_voxel(&s, &VoxelConfig::default()).unwrap();
        assert_eq!(a.feature, [0.3, 0.6, 0.9]);
    }

    #[test]
    fn symmetric_pair_gives_arithmetic_mean() {
        let s = [
            VoxelSample {
                feature: [0.2, 0.5, 0.5],
                d1: 0.3,
                d2: 0.1,
            },
            VoxelSample {
                feature: [0.6, 0.5, 0.5],
                d1: 0.3,
                d2: 0.1,
            },
        ];
        let a = aggregate_voxel(&s, &VoxelConfig::default()).unwrap();
        assert!((a.feature[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn empty_voxel_is_unoccupied() {
        assert!(aggregate_voxel(&[], &VoxelConfig::default()).is_none());
    }

    #[test]
    fn three_point_oracle() {
        // direct scalar evaluation of the weighted mean
        let pts = [
            ([0.9, 0.1, 0.2], 0.2, 0.0),
            ([0.8, 0.2, 0.1], 0.5, 0.4),
            ([0.1, 0.9, 0.7], 0.7, 1.0),
        ];
        let cfg = VoxelConfig::default();
        let mean: Vec<f64> = (0..3)
            .map(|c| pts.iter().map(|p| p.0[c]).sum::<f64>() / 3.0)
            .collect();
        let mut num = [0.0; 3];
        let mut den = 0.0;
        for (f, d1, d2) in &pts {
            let l1: f64 = (0..3).map(|c| (f[c] - mean[c]).abs()).sum();
            let df = 1.0 / l1.max(1e-3);
            let ds = (1.0 - d1) * (1.0 + d2);
            let w = 0.25 * df + 0.75 * ds;
            for c in 0..3 {
                num[c] += w * f[c];
            }
            den += w;
        }
        let samples: Vec<VoxelSample> = pts
            .iter()
            .map(|(f, d1, d2)| VoxelSample {
                feature: *f,
                d1: *d1,
                d2: *d2,
            })
            .collect();
        let a = aggregate_voxel(&samples, &cfg).unwrap();
        for c in 0..3 {
            assert!((a.feature[c] - num[c] / den).abs() < 1e-14);
        }
        assert!((a.weight_sum - den).abs() < 1e-12);
    }

    #[test]
    fn zero_mu_s_is_pure_feature_weighting() {
        let s = [
            VoxelSample {
                feature: [0.2, 0.2, 0.2],
                d1: 0.0,
                d2: 0.0,
            },
            VoxelSample {
                feature: [0.3, 0.2, 0.2],
                d1: 0.9,
                d2: 1.0,
            },
            VoxelSample {
                feature: [0.9, 0.9, 0.9],
                d1: 0.1,
                d2: 0.5,
            },
        ];
        let cfg = VoxelConfig {
            mu_s: 0.0,
            ..VoxelConfig::default()
        };
        let a = aggregate_voxel(&s, &cfg).unwrap();
        // moving points spatially changes nothing without the spatial term
        let moved: Vec<VoxelSample> = s
            .iter()
            .map(|x| VoxelSample {
                d1: 0.5,
                d2: 0.5,
                ..*x
            })
            .collect();
        assert_eq!(aggregate_voxel(&moved, &cfg).unwrap().feature, a.feature);
    }

    #[test]
    fn config_validation() {
        assert!(VoxelConfig::default().validate().is_ok());
        assert!(VoxelConfig {
            num_planes: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(VoxelConfig {
            mu_f: 0.0,
            mu_s: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(VoxelConfig {
            epsilon_f: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    fn sample_strategy() -> impl Strategy<Value = VoxelSample> {
        (
            prop::array::uniform3(0.0..=1.0f64),
            0.0..=1.0f64,
            0.0..=1.0f64,
        )
            .prop_map(|(feature, d1, d2)| VoxelSample { feature, d1, d2 })
    }

    proptest! {
        #[test]
        fn aggregate_is_convex_combination(
            samples in prop::collection::vec(sample_strategy(), 1..12),
            mu_f in 0.0..2.0f64,
            mu_s in 0.01..2.0f64,
        ) {
            let cfg = VoxelConfig { mu_f, mu_s, ..VoxelConfig::default() };
            let a = aggregate_voxel(&samples, &cfg).unwrap();
            for c in 0..3 {
                let lo = samples.iter().map(|s| s.feature[c]).fold(f64::INFINITY, f64::min);
                let hi = samples.iter().map(|s| s.feature[c]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(a.feature[c] >= lo && a.feature[c] <= hi);
            }
        }

        #[test]
        fn feature_distance_is_monotone(a in 0.0..3.0f64, b in 0.0..3.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let dl = feature_distance(&[lo, 0.0, 0.0], &[0.0; 3], 1e-3);
            let dh = feature_distance(&[hi, 0.0, 0.0], &[0.0; 3], 1e-3);
            prop_assert!(dl >= dh && dh > 0.0);
        }
    }
}
