//! Point clouds, pinhole cameras, frustum culling and synthetic scenes.

mod camera_io;
pub mod ply;
pub mod scene;

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::par;

pub use camera_io::{read_intrinsics, read_poses, read_views, write_intrinsics, write_poses};
pub use scene::{make_synthetic_scene, SceneKind, SceneSpec, SyntheticScene};

/// Number of feature channels carried by every point (RGB).
pub const FEATURE_DIM: usize = 3;

pub type Feature = [f64; FEATURE_DIM];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3D {
    pub position: Vector3<f64>,
    pub feature: Feature,
}

impl Point3D {
    pub fn new(position: Vector3<f64>, feature: Feature) -> Self {
        Point3D { position, feature }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3D>,
    bounds: Option<Aabb>,
}

impl PointCloud {
    /// Builds a cloud, rejecting non-finite positions and features outside `[0, 1]`.
    pub fn new(points: Vec<Point3D>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.position.iter().all(|v| v.is_finite()) {
                return Err(Error::arg(format!("point {i} has a non-finite position")));
            }
            if !p
                .feature
                .iter()
                .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
            {
                return Err(Error::arg(format!(
                    "point {i} has a feature outside [0, 1]"
                )));
            }
        }
        let bounds = compute_bounds(&points);
        Ok(PointCloud { points, bounds })
    }

    pub fn empty() -> Self {
        PointCloud {
            points: Vec::new(),
            bounds: None,
        }
    }

    pub fn points(&self) -> &[Point3D] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `None` for an empty cloud.
    pub fn bounds(&self) -> Option<Aabb> {
        self.bounds
    }

    pub fn into_points(self) -> Vec<Point3D> {
        self.points
    }

    /// Subset in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let points: Vec<Point3D> = indices.iter().map(|&i| self.points[i]).collect();
        let bounds = compute_bounds(&points);
        PointCloud { points, bounds }
    }

    /// Rescales positions into the unit cube: `(p - min) / max_extent`.
    pub fn max_normalized(&self) -> (PointCloud, Normalization) {
        let Some(b) = self.bounds else {
            return (self.clone(), Normalization::identity());
        };
        let ext = b.extent().max();
        let scale = if ext > 0.0 { ext } else { 1.0 };
        let norm = Normalization {
            offset: b.min,
            scale,
        };
        let points: Vec<Point3D> = self
            .points
            .iter()
            .map(|p| Point3D::new(norm.apply(&p.position), p.feature))
            .collect();
        let bounds = compute_bounds(&points);
        (PointCloud { points, bounds }, norm)
    }
}

fn compute_bounds(points: &[Point3D]) -> Option<Aabb> {
    let first = points.first()?;
    let mut min = first.position;
    let mut max = first.position;
    for p in &points[1..] {
        min = min.inf(&p.position);
        max = max.sup(&p.position);
    }
    Some(Aabb { min, max })
}

/// The affine map `p -> (p - offset) / scale` used by max-normalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub offset: Vector3<f64>,
    pub scale: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization {
            offset: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (p - self.offset) / self.scale
    }

    /// Camera that sees the normalised cloud exactly as `view` saw the original:
    /// pixels are unchanged, depths shrink by `scale`.
    pub fn apply_view(&self, view: &CameraView) -> CameraView {
        let r = view.pose.rotation();
        let t = view.pose.translation();
        let t_new = (r * self.offset + t) / self.scale;
        let mut m = view.pose.matrix;
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t_new);
        CameraView {
            intrinsics: view.intrinsics,
            pose: CameraPose { matrix: m },
        }
    }

    pub fn apply_frustum(&self, f: &Frustum) -> Frustum {
        Frustum {
            near: f.near / self.scale,
            far: f.far / self.scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::arg(format!("invalid focal lengths fx={fx} fy={fy}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::arg("image resolution must be positive"));
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Symmetric pinhole with the given horizontal field of view (radians).
    pub fn from_fov(width: usize, height: usize, fov_x: f64) -> Result<Self> {
        let fx = width as f64 / (2.0 * (fov_x / 2.0).tan());
        Self::new(
            fx,
            fx,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
    }
}

/// World-to-camera rigid transform `[R | t]` (x right, y down, z forward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub matrix: Matrix3x4<f64>,
}

const ROTATION_TOL: f64 = 1e-6;

impl CameraPose {
    pub fn new(matrix: Matrix3x4<f64>) -> Result<Self> {
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::arg("pose contains non-finite entries"));
        }
        let r: Matrix3<f64> = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let err = (r * r.transpose() - Matrix3::identity()).abs().max();
        if err > ROTATION_TOL || (r.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::arg(format!(
                "rotation block is not a proper rotation (orthonormality error {err:.3e}, det {:.6})",
                r.determinant()
            )));
        }
        Ok(CameraPose { matrix })
    }

    /// Accepts a nearly-orthonormal rotation (error < 1e-3, e.g. from text
    /// files with few digits) and snaps it to the closest rotation.
    pub fn from_approx(matrix: Matrix3x4<f64>) -> Result<Self> {
        let r: Matrix3<f64> = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let err = (r * r.transpose() - Matrix3::identity()).abs().max();
        if !err.is_finite() || err > 1e-3 || r.determinant() <= 0.0 {
            return Err(Error::arg(format!(
                "rotation block is not a rotation (orthonormality error {err:.3e})"
            )));
        }
        let svd = r.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let snapped = u * vt;
        let mut m = matrix;
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&snapped);
        CameraPose::new(m)
    }

    pub fn identity() -> Self {
        CameraPose {
            matrix: Matrix3x4::identity(),
        }
    }

    /// Camera at `eye` looking at `target`, with `up` the world up direction.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let f = (target - eye).normalize();
        let r = f.cross(&up);
        if r.norm() < 1e-9 {
            return Err(Error::arg("look_at: view direction parallel to up"));
        }
        let r = r.normalize();
        let d = f.cross(&r);
        let rot = Matrix3::from_rows(&[r.transpose(), d.transpose(), f.transpose()]);
        let t = -(rot * eye);
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        CameraPose::new(m)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn to_world(&self, p_cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().transpose() * (p_cam - self.translation())
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.translation())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraView {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    pub depth: f64,
}

impl CameraView {
    pub fn new(intrinsics: CameraIntrinsics, pose: CameraPose) -> Self {
        CameraView { intrinsics, pose }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    /// Pinhole projection; `None` when the point is behind (or on) the camera plane.
    pub fn project(&self, position: &Vector3<f64>) -> Option<Projection> {
        let pc = self.pose.to_camera(position);
        if pc.z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        Some(Projection {
            pixel: Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy),
            depth: pc.z,
        })
    }

    /// Inverse of [`CameraView::project`] given the depth it returned.
    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        let pc = Vector3::new(
            (pixel.x - k.cx) / k.fx * depth,
            (pixel.y - k.cy) / k.fy * depth,
            depth,
        );
        self.pose.to_world(&pc)
    }

    /// World-space ray (origin, unit direction) through a sub-pixel location.
    pub fn ray(&self, pixel: &Vector2<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let k = &self.intrinsics;
        let d_cam = Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
        let dir = (self.pose.rotation().transpose() * d_cam).normalize();
        (self.pose.center(), dir)
    }

    /// Integer pixel cell `(col, row)` when `pixel` lies in `[0,W)×[0,H)`.
    pub fn pixel_cell(&self, pixel: &Vector2<f64>) -> Option<(usize, usize)> {
        let (w, h) = (self.intrinsics.width as f64, self.intrinsics.height as f64);
        if pixel.x >= 0.0 && pixel.x < w && pixel.y >= 0.0 && pixel.y < h {
            let col = (pixel.x.floor() as usize).min(self.intrinsics.width - 1);
            let row = (pixel.y.floor() as usize).min(self.intrinsics.height - 1);
            Some((col, row))
        } else {
            None
        }
    }
}

/// Free-function form of [`CameraView::project`].
pub fn project(point: &Point3D, view: &CameraView) -> Option<Projection> {
    view.project(&point.position)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum {
    pub near: f64,
    pub far: f64,
}

impl Default for Frustum {
    fn default() -> Self {
        Frustum {
            near: 0.1,
            far: 10.0,
        }
    }
}

impl Frustum {
    pub fn new(near: f64, far: f64) -> Result<Self> {
        if !(near > 0.0 && far > near && far.is_finite()) {
            return Err(Error::arg(format!(
                "frustum needs 0 < near < far (got {near}, {far})"
            )));
        }
        Ok(Frustum { near, far })
    }

    /// Closed depth interval `[near, far]`.
    pub fn contains_depth(&self, depth: f64) -> bool {
        depth >= self.near && depth <= self.far
    }
}

/// A point that survived culling together with its projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisiblePoint {
    pub index: usize,
    pub col: usize,
    pub row: usize,
    pub projection: Projection,
}

/// Projects every point and keeps those inside the frustum, in input order.
pub fn visible_points(
    cloud: &PointCloud,
    view: &CameraView,
    frustum: &Frustum,
) -> Vec<VisiblePoint> {
    let projected = par::map_slice(cloud.points(), |p| {
        let proj = view.project(&p.position)?;
        if !frustum.contains_depth(proj.depth) {
            return None;
        }
        let (col, row) = view.pixel_cell(&proj.pixel)?;
        Some((col, row, proj))
    });
    projected
        .into_iter()
        .enumerate()
        .filter_map(|(index, v)| {
            v.map(|(col, row, projection)| VisiblePoint {
                index,
                col,
                row,
                projection,
            })
        })
        .collect()
}

/// Points with `near <= depth <= far` whose pixel lies in `[0,W)×[0,H)`.
pub fn frustum_cull(cloud: &PointCloud, view: &CameraView, frustum: &Frustum) -> PointCloud {
    let idx: Vec<usize> = visible_points(cloud, view, frustum)
        .iter()
        .map(|v| v.index)
        .collect();
    if idx.is_empty() && !cloud.is_empty() {
        log::warn!("frustum culling removed all {} points", cloud.len());
    }
    cloud.select(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_view(fx: f64, cx: f64, w: usize, h: usize) -> CameraView {
        CameraView::new(
            CameraIntrinsics::new(fx, fx, cx, cx, w, h).unwrap(),
            CameraPose::identity(),
        )
    }

    fn pt(x: f64, y: f64, z: f64) -> Point3D {
        Point3D::new(Vector3::new(x, y, z), [0.5; 3])
    }

    #[test]
    fn principal_ray_projects_to_principal_point() {
        let v = unit_view(1.0, 0.0, 4, 4);
        let p = project(&pt(0.0, 0.0, 1.0), &v).unwrap();
        assert_eq!(p.pixel, Vector2::new(0.0, 0.0));
        assert_eq!(p.depth, 1.0);
    }

    #[test]
    fn pinhole_formula_hand_value() {
        let v = unit_view(100.0, 50.0, 200, 200);
        let p = project(&pt(1.0, 0.0, 2.0), &v).unwrap();
        assert_abs_diff_eq!(p.pixel.x, 100.0, epsilon = 1e-12);
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn behind_camera_is_excluded() {
        let v = unit_view(1.0, 0.0, 4, 4);
        assert!(project(&pt(0.0, 0.0, -1.0), &v).is_none());
    }

    #[test]
    fn all_points_behind_camera_cull_to_empty() {
        let v = unit_view(10.0, 2.0, 4, 4);
        let cloud = PointCloud::new(vec![pt(0.0, 0.0, -1.0), pt(0.1, 0.0, -3.0)]).unwrap();
        assert!(frustum_cull(&cloud, &v, &Frustum::default()).is_empty());
    }

    #[test]
    fn near_bound_is_closed_and_image_border_half_open() {
        let v = unit_view(10.0, 2.0, 4, 4);
        let f = Frustum::new(0.5, 2.0).unwrap();
        let cloud = PointCloud::new(vec![
            pt(0.0, 0.0, 0.5),
            pt(0.0, 0.0, 2.0),
            // pixel x = 10*0.2/1 + 2 = 4.0 == width: outside
            pt(0.2, 0.0, 1.0),
        ])
        .unwrap();
        let out = frustum_cull(&cloud, &v, &f);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn cull_matches_per_point_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3D> = (0..10_000)
            .map(|_| {
                pt(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-2.0..12.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let view = CameraView::new(
            CameraIntrinsics::new(30.0, 25.0, 31.5, 20.0, 64, 48).unwrap(),
            CameraPose::look_at(
                Vector3::new(0.2, -0.1, -0.5),
                Vector3::new(0.0, 0.3, 5.0),
                Vector3::new(0.0, 1.0, 0.0),
            )
            .unwrap(),
        );
        let fr = Frustum::default();
        let got = frustum_cull(&cloud, &view, &fr);
        // independent oracle: explicit matrix arithmetic per point
        let m = view.pose.matrix;
        let expect: Vec<Point3D> = pts
            .into_iter()
            .filter(|p| {
                let x = p.position;
                let xc = m[(0, 0)] * x.x + m[(0, 1)] * x.y + m[(0, 2)] * x.z + m[(0, 3)];
                let yc = m[(1, 0)] * x.x + m[(1, 1)] * x.y + m[(1, 2)] * x.z + m[(1, 3)];
                let zc = m[(2, 0)] * x.x + m[(2, 1)] * x.y + m[(2, 2)] * x.z + m[(2, 3)];
                if zc <= 0.0 || zc < fr.near || zc > fr.far {
                    return false;
                }
                let u = 30.0 * xc / zc + 31.5;
                let v = 25.0 * yc / zc + 20.0;
                (0.0..64.0).contains(&u) && (0.0..48.0).contains(&v)
            })
            .collect();
        assert!(!expect.is_empty());
        assert_eq!(got.points(), &expect[..]);
        // idempotent
        assert_eq!(frustum_cull(&got, &view, &fr), got);
    }

    #[test]
    fn look_at_produces_proper_rotation() {
        let p = CameraPose::look_at(
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        let target_cam = p.to_camera(&Vector3::zeros());
        assert!(target_cam.x.abs() < 1e-12 && target_cam.y.abs() < 1e-12 && target_cam.z > 0.0);
        // world up maps to image "up" (negative y)
        let above = p.to_camera(&Vector3::new(0.0, 0.5, 0.0));
        assert!(above.y < 0.0);
    }

    #[test]
    fn pose_rejects_reflection() {
        let mut m = Matrix3x4::identity();
        m[(0, 0)] = -1.0;
        assert!(CameraPose::new(m).is_err());
    }

    #[test]
    fn normalization_preserves_pixels() {
        let cloud = PointCloud::new(vec![
            pt(0.0, 0.0, 2.0),
            pt(1.0, 2.0, 6.0),
            pt(-1.0, 0.5, 4.0),
        ])
        .unwrap();
        let view = unit_view(20.0, 10.0, 20, 20);
        let (nc, norm) = cloud.max_normalized();
        let b = nc.bounds().unwrap();
        assert!(b.min.iter().all(|v| v.abs() < 1e-12));
        assert!((b.extent().max() - 1.0).abs() < 1e-12);
        let nv = norm.apply_view(&view);
        for (a, b) in cloud.points().iter().zip(nc.points()) {
            let pa = view.project(&a.position).unwrap();
            let pb = nv.project(&b.position).unwrap();
            assert!((pa.pixel - pb.pixel).norm() < 1e-9);
            assert!((pa.depth / norm.scale - pb.depth).abs() < 1e-12);
        }
    }

    #[test]
    fn features_outside_unit_range_are_rejected() {
        let p = Point3D::new(Vector3::zeros(), [1.5, 0.0, 0.0]);
        assert!(PointCloud::new(vec![p]).is_err());
    }
}
