//! Minimal line plot: white canvas, axes, one polyline with dot markers per
//! series. X positions are evenly spaced sample indices, Y runs from 0 to the
//! largest value.

use pcrender::image::Image;

const MARGIN: usize = 24;

fn put(img: &mut Image, x: i64, y: i64, rgb: [f64; 3]) {
    if x < 0 || y < 0 || x as usize >= img.width || y as usize >= img.height {
        return;
    }
    for (c, v) in rgb.iter().enumerate() {
        img.set(c, y as usize, x as usize, *v);
    }
}

fn line(img: &mut Image, (x0, y0): (i64, i64), (x1, y1): (i64, i64), rgb: [f64; 3]) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        for o in [-1, 0, 1] {
            put(img, x, y + o, rgb);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

pub fn line_plot(series: &[(&[f64], [f64; 3])], width: usize, height: usize) -> Image {
    let mut img = Image::filled(3, height, width, 1.0);
    let (left, bottom) = (MARGIN as i64, (height - MARGIN) as i64);
    let (right, top) = ((width - MARGIN) as i64, MARGIN as i64);
    let black = [0.0; 3];
    line(&mut img, (left, bottom), (right, bottom), black);
    line(&mut img, (left, bottom), (left, top), black);
    let y_max = series
        .iter()
        .flat_map(|(s, _)| s.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    for (values, rgb) in series {
        let n = values.len();
        let pts: Vec<(i64, i64)> = values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let fx = if n > 1 {
                    i as f64 / (n - 1) as f64
                } else {
                    0.5
                };
                let x = left + (fx * (right - left) as f64).round() as i64;
                let y = bottom - (v / y_max * (bottom - top) as f64).round() as i64;
                (x, y)
            })
            .collect();
        for w in pts.windows(2) {
            line(&mut img, w[0], w[1], *rgb);
        }
        for &(x, y) in &pts {
            for dy in -3..=3 {
                for dx in -3..=3 {
                    if dx * dx + dy * dy <= 9 {
                        put(&mut img, x + dx, y + dy, *rgb);
                    }
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_axes_and_series() {
        let a = [1.0, 2.0, 3.0];
        let img = line_plot(&[(&a, [1.0, 0.0, 0.0])], 100, 80);
        assert_eq!(img.get(1, 80 - MARGIN, 50), 0.0);
        // the last point sits at the right edge of the plot area
        assert_eq!(
            img.get(
                0,
                80 - MARGIN - ((3.0 / 3.15) * 32.0f64).round() as usize,
                100 - MARGIN
            ),
            1.0
        );
        assert_eq!(
            img.get(
                1,
                80 - MARGIN - ((3.0 / 3.15) * 32.0f64).round() as usize,
                100 - MARGIN
            ),
            0.0
        );
        assert_eq!(img.get(0, 2, 2), 1.0);
    }
}
