//! PLY reader/writer for colored point clouds.
//!
//! Supports `ascii` and `binary_little_endian` files. The `vertex` element must
//! carry `x`, `y`, `z` and `red`, `green`, `blue`; other properties and
//! elements are skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::{Point3D, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PlyOptions {
    /// Colour points by normalised height when the file has no colours.
    pub synthetic_color: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut offset = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| err(line_no + 1, "header ended without `end_header`".into()))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| err(line_no + 1, "header is not valid text".into()))?
            .trim_end_matches('\r')
            .trim();
        offset += end + 1;
        line_no += 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(err(1, format!("expected magic `ply`, found `{line}`")));
            }
            continue;
        }
        match toks.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                format = Some(match toks.get(1).copied() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(err(
                            line_no,
                            format!("unsupported format `{}`", other.unwrap_or("")),
                        ))
                    }
                });
            }
            Some("element") => {
                if toks.len() != 3 {
                    return Err(err(line_no, format!("malformed element line `{line}`")));
                }
                let count = toks[2]
                    .parse()
                    .map_err(|_| err(line_no, format!("bad element count `{}`", toks[2])))?;
                elements.push(Element {
                    name: toks[1].to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(line_no, "property before any element".into()))?;
                let bad = || err(line_no, format!("malformed property line `{line}`"));
                if toks.get(1) == Some(&"list") {
                    if toks.len() != 5 {
                        return Err(bad());
                    }
                    let count = Scalar::parse(toks[2]).ok_or_else(bad)?;
                    let item = Scalar::parse(toks[3]).ok_or_else(bad)?;
                    el.props.push(Property::List { count, item });
                } else {
                    if toks.len() != 3 {
                        return Err(bad());
                    }
                    let ty = Scalar::parse(toks[1]).ok_or_else(bad)?;
                    el.props.push(Property::Scalar {
                        name: toks[2].to_string(),
                        ty,
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(err(line_no, format!("unknown header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| err(line_no, "missing `format` line".into()))?;
    Ok(Header {
        format,
        elements,
        body_offset: offset,
        body_line: line_no,
    })
}

struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    rgb_ty: Scalar,
}

fn vertex_layout(path: &Path, el: &Element) -> Result<VertexLayout> {
    let find = |names: &[&str]| {
        el.props.iter().position(|p| match p {
            Property::Scalar { name, .. } => names.contains(&name.as_str()),
            _ => false,
        })
    };
    let mut xyz = [0; 3];
    for (i, n) in ["x", "y", "z"].iter().enumerate() {
        xyz[i] = find(&[n]).ok_or_else(|| {
            Error::Format(format!(
                "{}: vertex element lacks property `{n}`",
                path.display()
            ))
        })?;
    }
    let r = find(&["red", "r"]);
    let g = find(&["green", "g"]);
    let b = find(&["blue", "b"]);
    let rgb = match (r, g, b) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let rgb_ty = match rgb.map(|c| &el.props[c[0]]) {
        Some(Property::Scalar { ty, .. }) => *ty,
        _ => Scalar::U8,
    };
    Ok(VertexLayout { xyz, rgb, rgb_ty })
}

fn color_scale(ty: Scalar) -> f64 {
    match ty {
        Scalar::F32 | Scalar::F64 => 1.0,
        Scalar::U16 => 65535.0,
        _ => 255.0,
    }
}

pub fn load_ply(path: &Path) -> Result<PointCloud> {
    load_ply_with(path, PlyOptions::default())
}

pub fn load_ply_with(path: &Path, opts: PlyOptions) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &bytes)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Format(format!("{}: no `vertex` element", path.display())))?;
    let vertex = &header.elements[vi];
    if vertex.count == 0 {
        return Err(Error::Format(format!(
            "{}: vertex element is empty; a point cloud needs at least one point",
            path.display()
        )));
    }
    let layout = vertex_layout(path, vertex)?;
    if layout.rgb.is_none() && !opts.synthetic_color {
        return Err(Error::Format(format!(
            "{}: vertex element has no red/green/blue properties; \
             re-run with the synthetic-color fallback (--synthetic-color) to colour by height",
            path.display()
        )));
    }
    let rows = match header.format {
        PlyFormat::Ascii => read_ascii(path, &bytes, &header, vi)?,
        PlyFormat::BinaryLittleEndian => read_binary(path, &bytes, &header, vi)?,
    };
    let scale = color_scale(layout.rgb_ty);
    let mut points = Vec::with_capacity(rows.len());
    for row in &rows {
        let pos = Vector3::new(row[layout.xyz[0]], row[layout.xyz[1]], row[layout.xyz[2]]);
        let feature = match layout.rgb {
            Some([r, g, b]) => [
                (row[r] / scale).clamp(0.0, 1.0),
                (row[g] / scale).clamp(0.0, 1.0),
                (row[b] / scale).clamp(0.0, 1.0),
            ],
            None => [0.0; 3],
        };
        points.push(Point3D::new(pos, feature));
    }
    if layout.rgb.is_none() {
        height_colors(&mut points);
    }
    PointCloud::new(points)
}

fn height_colors(points: &mut [Point3D]) {
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.position.y), hi.max(p.position.y))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    for p in points {
        let t = (p.position.y - lo) / span;
        p.feature = [t, 0.5, 1.0 - t];
    }
}

/// Scalar property values per vertex; list properties yield nothing.
fn read_ascii(path: &Path, bytes: &[u8], h: &Header, vi: usize) -> Result<Vec<Vec<f64>>> {
    let body = std::str::from_utf8(&bytes[h.body_offset..]).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: h.body_line + 1,
        message: "ascii body is not valid text".into(),
    })?;
    let mut lines = body
        .lines()
        .enumerate()
        .map(|(i, l)| (h.body_line + 1 + i, l));
    let mut out = Vec::new();
    for (ei, el) in h.elements.iter().enumerate() {
        for _ in 0..el.count {
            let (line_no, line) = lines.next().ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: h.body_line + 1,
                message: format!("file ended inside element `{}`", el.name),
            })?;
            if ei != vi {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let mut toks = line.split_whitespace();
            let mut row = Vec::with_capacity(el.props.len());
            for p in &el.props {
                let mut next = |ty: Scalar| -> Result<f64> {
                    let t = toks.next().ok_or_else(|| err("too few values".into()))?;
                    let bad = || err(format!("bad number `{t}`"));
                    // float32 tokens are parsed at their own precision so ascii and
                    // binary encodings of the same value agree bit for bit
                    match ty {
                        Scalar::F32 => t.parse::<f32>().map(f64::from).map_err(|_| bad()),
                        _ => t.parse::<f64>().map_err(|_| bad()),
                    }
                };
                match p {
                    Property::Scalar { ty, .. } => row.push(next(*ty)?),
                    Property::List { count, item } => {
                        let n = next(*count)? as usize;
                        for _ in 0..n {
                            next(*item)?;
                        }
                        row.push(f64::NAN);
                    }
                }
            }
            out.push(row);
        }
        if ei == vi {
            break;
        }
    }
    Ok(out)
}

fn read_binary(path: &Path, bytes: &[u8], h: &Header, vi: usize) -> Result<Vec<Vec<f64>>> {
    let mut pos = h.body_offset;
    let truncated = || Error::Format(format!("{}: binary body is truncated", path.display()));
    let mut out = Vec::new();
    for (ei, el) in h.elements.iter().enumerate() {
        for _ in 0..el.count {
            let mut row = Vec::with_capacity(el.props.len());
            for p in &el.props {
                match p {
                    Property::Scalar { ty, .. } => {
                        let b = bytes.get(pos..pos + ty.size()).ok_or_else(truncated)?;
                        row.push(ty.read_le(b));
                        pos += ty.size();
                    }
                    Property::List { count, item } => {
                        let b = bytes.get(pos..pos + count.size()).ok_or_else(truncated)?;
                        let n = count.read_le(b) as usize;
                        pos += count.size() + n * item.size();
                        if pos > bytes.len() {
                            return Err(truncated());
                        }
                        row.push(f64::NAN);
                    }
                }
            }
            if ei == vi {
                out.push(row);
            }
        }
        if ei == vi {
            break;
        }
    }
    Ok(out)
}

/// Writes positions as float32 and colours as 8-bit (`round(255·c)`).
pub fn write_ply(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        buf,
        "ply\nformat {fmt} 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )
    .unwrap();
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for p in cloud.points() {
        let xyz = [
            p.position.x as f32,
            p.position.y as f32,
            p.position.z as f32,
        ];
        let rgb = [q(p.feature[0]), q(p.feature[1]), q(p.feature[2])];
        match format {
            PlyFormat::Ascii => {
                writeln!(
                    buf,
                    "{:?} {:?} {:?} {} {} {}",
                    xyz[0], xyz[1], xyz[2], rgb[0], rgb[1], rgb[2]
                )
                .unwrap();
            }
            PlyFormat::BinaryLittleEndian => {
                for v in xyz {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                buf.extend_from_slice(&rgb);
            }
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write(dir: &Path, name: &str, body: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const ASCII_ONE: &str = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n0 0 0 255 0 0\n";

    #[test]
    fn single_ascii_vertex_is_normalized() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "a.ply", ASCII_ONE.as_bytes());
        let c = load_ply(&p).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.points()[0].feature, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_vertex_element_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        let body = ASCII_ONE
            .replace("vertex 1", "vertex 0")
            .replace("0 0 0 255 0 0\n", "");
        let p = write(d.path(), "e.ply", body.as_bytes());
        assert!(load_ply(&p).is_err());
    }

    #[test]
    fn malformed_header_names_line() {
        let d = tempfile::tempdir().unwrap();
        let body = ASCII_ONE.replace("property float y", "property flt y");
        let p = write(d.path(), "m.ply", body.as_bytes());
        let e = load_ply(&p).unwrap_err().to_string();
        assert!(e.contains("line 5"), "{e}");
    }

    #[test]
    fn missing_colors_suggest_fallback() {
        let d = tempfile::tempdir().unwrap();
        let body = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
property float z\nend_header\n0 0 0\n0 1 0\n";
        let p = write(d.path(), "nc.ply", body.as_bytes());
        let e = load_ply(&p).unwrap_err().to_string();
        assert!(e.contains("synthetic-color"), "{e}");
        let c = load_ply_with(
            &p,
            PlyOptions {
                synthetic_color: true,
            },
        )
        .unwrap();
        assert_eq!(c.points()[0].feature, [0.0, 0.5, 1.0]);
        assert_eq!(c.points()[1].feature, [1.0, 0.5, 0.0]);
    }

    #[test]
    fn skips_foreign_properties_and_elements() {
        let d = tempfile::tempdir().unwrap();
        let mut body = b"ply\nformat binary_little_endian 1.0\ncomment x\nelement vertex 1\n\
property double nx\nproperty float x\nproperty float y\nproperty float z\nproperty list uchar int idx\n\
property uchar red\nproperty uchar green\nproperty uchar blue\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
            .to_vec();
        body.extend_from_slice(&7.0f64.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0] {
            body.extend_from_slice(&v.to_le_bytes());
        }
        body.push(2);
        body.extend_from_slice(&5i32.to_le_bytes());
        body.extend_from_slice(&6i32.to_le_bytes());
        body.extend_from_slice(&[0, 51, 255]);
        let p = write(d.path(), "b.ply", &body);
        let c = load_ply(&p).unwrap();
        assert_eq!(c.points()[0].position, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(c.points()[0].feature, [0.0, 0.2, 1.0]);
    }

    #[test]
    fn binary_and_ascii_encodings_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point3D> = (0..1000)
            .map(|_| {
                Point3D::new(
                    Vector3::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    ),
                    [
                        rng.random_range(0..=255u8) as f64 / 255.0,
                        rng.random_range(0..=255u8) as f64 / 255.0,
                        rng.random_range(0..=255u8) as f64 / 255.0,
                    ],
                )
            })
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let d = tempfile::tempdir().unwrap();
        let pa = d.path().join("a.ply");
        let pb = d.path().join("b.ply");
        write_ply(&pa, &cloud, PlyFormat::Ascii).unwrap();
        write_ply(&pb, &cloud, PlyFormat::BinaryLittleEndian).unwrap();
        let a = load_ply(&pa).unwrap();
        let b = load_ply(&pb).unwrap();
        assert_eq!(a, b);
        for (orig, back) in cloud.points().iter().zip(b.points()) {
            assert_eq!(orig.feature, back.feature);
            assert!((orig.position - back.position).abs().max() < 1e-6 * 5.0);
        }
    }
}
