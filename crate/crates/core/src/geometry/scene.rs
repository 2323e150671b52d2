//! Built-in analytic scenes used in place of scanned datasets.
//!
//! Every scene is a small set of textured planes and spheres. Points are
//! sampled area-uniformly on the surfaces and carry the exact texture colour;
//! ground-truth images come from ray casting the same surfaces, so they are
//! dense where the point cloud is sparse.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CameraIntrinsics, CameraPose, CameraView, Feature, Point3D, PointCloud};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    BoxRoom,
    CheckerboardWalls,
    SphereField,
}

impl SceneKind {
    pub const ALL: [SceneKind; 3] = [
        SceneKind::BoxRoom,
        SceneKind::CheckerboardWalls,
        SceneKind::SphereField,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::BoxRoom => "box_room",
            SceneKind::CheckerboardWalls => "checkerboard_walls",
            SceneKind::SphereField => "sphere_field",
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = SceneKind::ALL.iter().map(|k| k.name()).collect();
                Error::arg(format!(
                    "unknown scene `{s}`; valid scenes: {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub num_points: usize,
    pub num_views: usize,
    pub width: usize,
    pub height: usize,
}

impl SceneSpec {
    pub fn new(name: &str, num_points: usize) -> Result<Self> {
        Ok(SceneSpec {
            kind: name.parse()?,
            num_points,
            num_views: 4,
            width: 64,
            height: 64,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Texture {
    Solid(Feature),
    Checker { a: Feature, b: Feature, cell: f64 },
    Stripes { a: Feature, b: Feature, period: f64 },
    Gradient { a: Feature, b: Feature },
}

fn mix(a: &Feature, b: &Feature, t: f64) -> Feature {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

impl Texture {
    /// `(s, t)` are surface coordinates in metres (planes) or normalised (spheres).
    fn color(&self, s: f64, t: f64, t_span: f64) -> Feature {
        match *self {
            Texture::Solid(c) => c,
            Texture::Checker { a, b, cell } => {
                let k = (s / cell).floor() as i64 + (t / cell).floor() as i64;
                if k.rem_euclid(2) == 0 {
                    a
                } else {
                    b
                }
            }
            Texture::Stripes { a, b, period } => {
                if (s / period).floor() as i64 % 2 == 0 {
                    a
                } else {
                    b
                }
            }
            Texture::Gradient { a, b } => mix(&a, &b, (t / t_span).clamp(0.0, 1.0)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    /// Rectangle `origin + s·u + t·v`, `s ∈ [0, su]`, `t ∈ [0, sv]`, `u`,`v` orthonormal.
    Rect {
        origin: Vector3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        su: f64,
        sv: f64,
        texture: Texture,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
        texture: Texture,
    },
}

impl Surface {
    fn area(&self) -> f64 {
        match self {
            Surface::Rect { su, sv, .. } => su * sv,
            Surface::Sphere { radius, .. } => 4.0 * PI * radius * radius,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3D {
        match *self {
            Surface::Rect {
                origin,
                u,
                v,
                su,
                sv,
                texture,
            } => {
                let s = rng.random_range(0.0..su);
                let t = rng.random_range(0.0..sv);
                Point3D::new(origin + u * s + v * t, texture.color(s, t, sv))
            }
            Surface::Sphere {
                center,
                radius,
                texture,
            } => {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi = rng.random_range(0.0..2.0 * PI);
                let r = (1.0 - z * z).sqrt();
                let n = Vector3::new(r * phi.cos(), z, r * phi.sin());
                let (s, t) = sphere_uv(&n);
                Point3D::new(center + n * radius, texture.color(s, t, 1.0))
            }
        }
    }

    /// Nearest intersection distance and colour along a unit-direction ray.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Feature)> {
        match *self {
            Surface::Rect {
                origin,
                u,
                v,
                su,
                sv,
                texture,
            } => {
                let n = u.cross(&v);
                let denom = d.dot(&n);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t_hit = (origin - o).dot(&n) / denom;
                if t_hit <= 1e-9 {
                    return None;
                }
                let p = o + d * t_hit - origin;
                let (s, t) = (p.dot(&u), p.dot(&v));
                if (0.0..=su).contains(&s) && (0.0..=sv).contains(&t) {
                    Some((t_hit, texture.color(s, t, sv)))
                } else {
                    None
                }
            }
            Surface::Sphere {
                center,
                radius,
                texture,
            } => {
                let oc = o - center;
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t_hit = if -b - sq > 1e-9 { -b - sq } else { -b + sq };
                if t_hit <= 1e-9 {
                    return None;
                }
                let n = (o + d * t_hit - center) / radius;
                let (s, t) = sphere_uv(&n);
                Some((t_hit, texture.color(s, t, 1.0)))
            }
        }
    }
}

fn sphere_uv(n: &Vector3<f64>) -> (f64, f64) {
    let s = (n.z.atan2(n.x) + PI) / (2.0 * PI);
    let t = (n.y.clamp(-1.0, 1.0).acos()) / PI;
    (s * 8.0, t)
}

fn rect(origin: [f64; 3], u: [f64; 3], v: [f64; 3], su: f64, sv: f64, texture: Texture) -> Surface {
    Surface::Rect {
        origin: Vector3::from(origin),
        u: Vector3::from(u),
        v: Vector3::from(v),
        su,
        sv,
        texture,
    }
}

const RED: Feature = [0.85, 0.2, 0.15];
const GREEN: Feature = [0.2, 0.7, 0.3];
const BLUE: Feature = [0.15, 0.3, 0.85];
const CREAM: Feature = [0.95, 0.9, 0.75];
const DARK: Feature = [0.1, 0.1, 0.12];
const ORANGE: Feature = [0.95, 0.55, 0.1];
const TEAL: Feature = [0.1, 0.6, 0.6];
const GRAY: Feature = [0.55, 0.55, 0.55];

/// Room `[-2,2]×[-1.5,1.5]×[-2,2]` (y up), one texture per face.
fn box_room() -> Vec<Surface> {
    let (x, y, z) = (2.0, 1.5, 2.0);
    vec![
        // floor and ceiling
        rect(
            [-x, -y, -z],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            2.0 * x,
            2.0 * z,
            Texture::Checker {
                a: CREAM,
                b: DARK,
                cell: 0.5,
            },
        ),
        rect(
            [-x, y, -z],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            2.0 * x,
            2.0 * z,
            Texture::Solid(GRAY),
        ),
        // walls at z = ±2
        rect(
            [-x, -y, z],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            2.0 * x,
            2.0 * y,
            Texture::Stripes {
                a: RED,
                b: CREAM,
                period: 0.4,
            },
        ),
        rect(
            [-x, -y, -z],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            2.0 * x,
            2.0 * y,
            Texture::Gradient { a: BLUE, b: ORANGE },
        ),
        // walls at x = ±2
        rect(
            [x, -y, -z],
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            2.0 * z,
            2.0 * y,
            Texture::Checker {
                a: GREEN,
                b: CREAM,
                cell: 0.6,
            },
        ),
        rect(
            [-x, -y, -z],
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            2.0 * z,
            2.0 * y,
            Texture::Stripes {
                a: TEAL,
                b: DARK,
                period: 0.3,
            },
        ),
    ]
}

fn checkerboard_walls() -> Vec<Surface> {
    vec![
        rect(
            [-2.0, -1.5, 2.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            4.0,
            3.0,
            Texture::Checker {
                a: RED,
                b: CREAM,
                cell: 0.5,
            },
        ),
        rect(
            [2.0, -1.5, -2.0],
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            4.0,
            3.0,
            Texture::Checker {
                a: BLUE,
                b: CREAM,
                cell: 0.4,
            },
        ),
        rect(
            [-2.0, -1.5, -2.0],
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            4.0,
            3.0,
            Texture::Checker {
                a: GREEN,
                b: DARK,
                cell: 0.7,
            },
        ),
        rect(
            [-2.0, -1.5, -2.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            4.0,
            3.0,
            Texture::Checker {
                a: ORANGE,
                b: TEAL,
                cell: 0.6,
            },
        ),
        rect(
            [-2.0, -1.5, -2.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            4.0,
            4.0,
            Texture::Checker {
                a: GRAY,
                b: DARK,
                cell: 0.5,
            },
        ),
        rect(
            [-2.0, 1.5, -2.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            4.0,
            4.0,
            Texture::Checker {
                a: CREAM,
                b: GRAY,
                cell: 1.0,
            },
        ),
    ]
}

fn sphere_field(rng: &mut ChaCha8Rng) -> Vec<Surface> {
    let palette = [RED, GREEN, BLUE, ORANGE, TEAL, CREAM];
    let mut s = vec![
        rect(
            [-3.0, -1.0, -3.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            6.0,
            6.0,
            Texture::Checker {
                a: GRAY,
                b: DARK,
                cell: 0.5,
            },
        ),
        rect(
            [-3.0, -1.0, 3.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            6.0,
            3.0,
            Texture::Gradient { a: TEAL, b: CREAM },
        ),
        rect(
            [-3.0, -1.0, -3.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            6.0,
            3.0,
            Texture::Solid(CREAM),
        ),
        rect(
            [-3.0, -1.0, -3.0],
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            6.0,
            3.0,
            Texture::Stripes {
                a: BLUE,
                b: CREAM,
                period: 0.5,
            },
        ),
        rect(
            [3.0, -1.0, -3.0],
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            6.0,
            3.0,
            Texture::Stripes {
                a: ORANGE,
                b: CREAM,
                period: 0.5,
            },
        ),
        rect(
            [-3.0, 2.0, -3.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            6.0,
            6.0,
            Texture::Solid(GRAY),
        ),
    ];
    for i in 0..9 {
        let radius = rng.random_range(0.25..0.6);
        let center = Vector3::new(
            rng.random_range(-2.2..2.2),
            -1.0 + radius,
            rng.random_range(-0.5..2.5),
        );
        let a = palette[i % palette.len()];
        let b = palette[(i + 2) % palette.len()];
        s.push(Surface::Sphere {
            center,
            radius,
            texture: Texture::Stripes { a, b, period: 1.0 },
        });
    }
    s
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub cloud: PointCloud,
    pub views: Vec<CameraView>,
    surfaces: Vec<Surface>,
}

impl SyntheticScene {
    /// Dense ray-cast image of the analytic surfaces (black where nothing is hit).
    pub fn ground_truth(&self, view: &CameraView) -> Image {
        let (w, h) = (view.width(), view.height());
        let rows = par::map_range(h, |y| {
            let mut row = vec![[0.0; 3]; w];
            for (x, px) in row.iter_mut().enumerate() {
                let (o, d) = view.ray(&Vector2::new(x as f64 + 0.5, y as f64 + 0.5));
                let hit = self
                    .surfaces
                    .iter()
                    .filter_map(|s| s.intersect(&o, &d))
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                if let Some((_, c)) = hit {
                    *px = c;
                }
            }
            row
        });
        let mut img = Image::zeros(3, h, w);
        for (y, row) in rows.iter().enumerate() {
            for (x, c) in row.iter().enumerate() {
                for (ch, v) in c.iter().enumerate() {
                    img.set(ch, y, x, *v);
                }
            }
        }
        img
    }
}

/// Deterministic synthetic scene: same spec and seed give a bitwise-identical cloud.
pub fn make_synthetic_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    if spec.num_points == 0 {
        return Err(Error::arg("scene needs at least one point"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let surfaces = match spec.kind {
        SceneKind::BoxRoom => box_room(),
        SceneKind::CheckerboardWalls => checkerboard_walls(),
        SceneKind::SphereField => sphere_field(&mut rng),
    };
    let areas: Vec<f64> = surfaces.iter().map(|s| s.area()).collect();
    let total: f64 = areas.iter().sum();
    let mut cdf = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a / total;
        cdf.push(acc);
    }
    let points: Vec<Point3D> = (0..spec.num_points)
        .map(|_| {
            let u: f64 = rng.random();
            let k = cdf
                .iter()
                .position(|&c| u < c)
                .unwrap_or(surfaces.len() - 1);
            surfaces[k].sample(&mut rng)
        })
        .collect();
    let cloud = PointCloud::new(points)?;
    let views = scene_views(spec)?;
    Ok(SyntheticScene {
        spec: spec.clone(),
        cloud,
        views,
        surfaces,
    })
}

/// Cameras on a ring inside the scene, each looking across the interior.
fn scene_views(spec: &SceneSpec) -> Result<Vec<CameraView>> {
    let k = CameraIntrinsics::from_fov(spec.width, spec.height, 70f64.to_radians())?;
    let up = Vector3::new(0.0, 1.0, 0.0);
    (0..spec.num_views)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / spec.num_views.max(1) as f64 + 0.3;
            let (eye, target) = match spec.kind {
                SceneKind::SphereField => (
                    Vector3::new(0.6 * a.cos(), 0.2, -2.0 + 0.3 * a.sin()),
                    Vector3::new(0.3 * a.sin(), -0.5, 1.5),
                ),
                _ => (
                    Vector3::new(0.7 * a.cos(), 0.1 * a.sin(), 0.7 * a.sin()),
                    Vector3::new(-2.0 * a.cos(), -0.3, -2.0 * a.sin()),
                ),
            };
            Ok(CameraView::new(k, CameraPose::look_at(eye, target, up)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{frustum_cull, Frustum};

    #[test]
    fn same_seed_same_cloud() {
        let spec = SceneSpec::new("box_room", 50_000).unwrap();
        let a = make_synthetic_scene(&spec, 7).unwrap();
        let b = make_synthetic_scene(&spec, 7).unwrap();
        assert_eq!(a.cloud, b.cloud);
        assert_eq!(a.cloud.len(), 50_000);
    }

    #[test]
    fn unknown_scene_lists_valid_names() {
        let e = SceneSpec::new("castle", 10).unwrap_err().to_string();
        for k in SceneKind::ALL {
            assert!(e.contains(k.name()));
        }
    }

    #[test]
    fn every_scene_has_unit_range_features_and_visible_points() {
        for kind in SceneKind::ALL {
            let spec = SceneSpec::new(kind.name(), 20_000).unwrap();
            let s = make_synthetic_scene(&spec, 1).unwrap();
            assert!(s
                .cloud
                .points()
                .iter()
                .all(|p| p.feature.iter().all(|c| (0.0..=1.0).contains(c))));
            for v in &s.views {
                let vis = frustum_cull(&s.cloud, v, &Frustum::default());
                assert!(vis.len() > 500, "{kind}: only {} visible", vis.len());
                let gt = s.ground_truth(v);
                let lit = gt
                    .plane(0)
                    .iter()
                    .zip(gt.plane(2))
                    .filter(|(a, b)| **a + **b > 0.0)
                    .count();
                assert!(
                    lit > gt.width * gt.height * 9 / 10,
                    "{kind}: sparse ground truth"
                );
            }
        }
    }
}
