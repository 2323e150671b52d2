//! Text formats for cameras.
//!
//! Pose file: one camera per line, 12 whitespace-separated floats giving the
//! row-major 3×4 world-to-camera matrix. Intrinsics file: a single line
//! `fx fy cx cy width height`. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Matrix3x4;

use super::{CameraIntrinsics, CameraPose, CameraView};
use crate::error::{Error, Result};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn read_poses(path: &Path) -> Result<Vec<CameraPose>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut poses = Vec::new();
    for (line, l) in content_lines(&text) {
        let vals: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(line, format!("bad number: {e}")))?;
        if vals.len() != 12 {
            return Err(parse_err(
                line,
                format!("expected 12 values, found {}", vals.len()),
            ));
        }
        let m = Matrix3x4::from_row_slice(&vals);
        poses.push(CameraPose::from_approx(m).map_err(|e| parse_err(line, e.to_string()))?);
    }
    if poses.is_empty() {
        return Err(parse_err(0, "no poses in file".into()));
    }
    Ok(poses)
}

pub fn write_poses(path: &Path, poses: &[CameraPose]) -> Result<()> {
    let mut s = String::new();
    for p in poses {
        let row: Vec<String> = (0..3)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .map(|(r, c)| format!("{:?}", p.matrix[(r, c)]))
            .collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (line, l) = content_lines(&text).next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "empty intrinsics file".into(),
    })?;
    let err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let toks: Vec<&str> = l.split_whitespace().collect();
    if toks.len() != 6 {
        return Err(err(format!(
            "expected `fx fy cx cy width height`, found {} values",
            toks.len()
        )));
    }
    let f = |i: usize| {
        toks[i]
            .parse::<f64>()
            .map_err(|e| err(format!("bad number `{}`: {e}", toks[i])))
    };
    let u = |i: usize| {
        toks[i]
            .parse::<usize>()
            .map_err(|e| err(format!("bad size `{}`: {e}", toks[i])))
    };
    CameraIntrinsics::new(f(0)?, f(1)?, f(2)?, f(3)?, u(4)?, u(5)?).map_err(|e| err(e.to_string()))
}

pub fn write_intrinsics(path: &Path, k: &CameraIntrinsics) -> Result<()> {
    let s = format!(
        "{:?} {:?} {:?} {:?} {} {}\n",
        k.fx, k.fy, k.cx, k.cy, k.width, k.height
    );
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Pairs every pose in `poses` with the shared intrinsics.
pub fn read_views(poses: &Path, intrinsics: &Path) -> Result<Vec<CameraView>> {
    let k = read_intrinsics(intrinsics)?;
    Ok(read_poses(poses)?
        .into_iter()
        .map(|p| CameraView::new(k, p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn poses_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("poses.txt");
        let poses = vec![
            CameraPose::identity(),
            CameraPose::look_at(
                Vector3::new(0.3, 0.1, -1.0),
                Vector3::new(0.0, 0.0, 2.0),
                Vector3::new(0.0, 1.0, 0.0),
            )
            .unwrap(),
        ];
        write_poses(&p, &poses).unwrap();
        let back = read_poses(&p).unwrap();
        for (a, b) in poses.iter().zip(&back) {
            assert!((a.matrix - b.matrix).abs().max() < 1e-12);
        }
    }

    #[test]
    fn short_pose_line_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("poses.txt");
        fs::write(&p, "# header\n1 0 0 0 0 1 0 0 0 0 1 0\n1 2 3\n").unwrap();
        let e = read_poses(&p).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn intrinsics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.txt");
        let k = CameraIntrinsics::new(55.5, 56.0, 31.5, 32.0, 64, 64).unwrap();
        write_intrinsics(&p, &k).unwrap();
        assert_eq!(read_intrinsics(&p).unwrap(), k);
    }
}
