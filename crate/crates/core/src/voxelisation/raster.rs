use crate::error::Result;
use crate::geometry::{visible_points, CameraView, Frustum, PointCloud};
use crate::image::Image;

/// Nearest-point image of a cloud: `pixels` is `3 × H × W`, `depth` is
/// row-major `H × W` with `+∞` where nothing projects.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub pixels: Image,
    pub depth: Vec<f64>,
}

impl RasterImage {
    pub fn height(&self) -> usize {
        self.pixels.height
    }

    pub fn width(&self) -> usize {
        self.pixels.width
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<RasterImage> {
        let pixels = self.pixels.crop(y0, x0, h, w)?;
        let mut depth = Vec::with_capacity(h * w);
        for y in 0..h {
            let s = (y0 + y) * self.width() + x0;
            depth.extend_from_slice(&self.depth[s..s + w]);
        }
        Ok(RasterImage { pixels, depth })
    }
}

/// One-pixel splat z-buffer. On exactly equal depths the lowest point index wins.
pub fn rasterize_zbuffer(cloud: &PointCloud, view: &CameraView, frustum: &Frustum) -> RasterImage {
    let (w, h) = (view.width(), view.height());
    let mut depth = vec![f64::INFINITY; w * h];
    let mut winner = vec![usize::MAX; w * h];
    // visible_points is in index order, so a strict comparison keeps the first
    for v in visible_points(cloud, view, frustum) {
        let k = v.row * w + v.col;
        if v.projection.depth < depth[k] {
            depth[k] = v.projection.depth;
            winner[k] = v.index;
        }
    }
    let mut pixels = Image::zeros(3, h, w);
    let points = cloud.points();
    for (k, &idx) in winner.iter().enumerate() {
        if idx != usize::MAX {
            for c in 0..3 {
                pixels.set(c, k / w, k % w, points[idx].feature[c]);
            }
        }
    }
    RasterImage { pixels, depth }
}
