use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;

use super::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::output::{fmt_f64, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// `x y z` or `x y z nx ny nz` per line, `#` comments.
    Xyz,
    /// ASCII PLY with vertex properties `x y z` and optional `nx ny nz`.
    Ply,
    /// Wavefront OBJ; only `v` lines are read.
    ObjVertices,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        ext.parse().ok()
    }
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" | "txt" => Ok(CloudFormat::Xyz),
            "ply" => Ok(CloudFormat::Ply),
            "obj" => Ok(CloudFormat::ObjVertices),
            other => Err(Error::InvalidArgument(format!(
                "unknown point cloud format '{other}'"
            ))),
        }
    }
}

impl fmt::Display for CloudFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CloudFormat::Xyz => "xyz",
            CloudFormat::Ply => "ply",
            CloudFormat::ObjVertices => "obj",
        })
    }
}

pub fn load_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cloud(&text, format)
}

pub(crate) fn parse_cloud(text: &str, format: CloudFormat) -> Result<PointCloud> {
    let (points, normals) = match format {
        CloudFormat::Xyz => parse_xyz(text)?,
        CloudFormat::Ply => parse_ply(text)?,
        CloudFormat::ObjVertices => (parse_obj(text)?, None),
    };
    let normals = normals.map(renormalize).transpose()?;
    PointCloud::new(points, normals)
}

fn renormalize(normals: Vec<Point>) -> Result<Vec<Point>> {
    normals
        .into_iter()
        .map(|n| {
            let norm = n.norm();
            if norm > 0.0 && norm.is_finite() {
                Ok(n / norm)
            } else {
                Err(Error::NonUnitNormal { norm })
            }
        })
        .collect()
}

fn parse_numbers(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("'{tok}' is not a number"),
            })
        })
        .collect()
}

type Parsed = (Vec<Point>, Option<Vec<Point>>);

fn parse_xyz(text: &str) -> Result<Parsed> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = parse_numbers(line, lineno)?;
        if v.len() != 3 && v.len() != 6 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 or 6 values, found {}", v.len()),
            });
        }
        if *width.get_or_insert(v.len()) != v.len() {
            return Err(Error::Parse {
                line: lineno,
                message: "rows mix 3 and 6 columns".into(),
            });
        }
        points.push(Vector3::new(v[0], v[1], v[2]));
        if v.len() == 6 {
            normals.push(Vector3::new(v[3], v[4], v[5]));
        }
    }
    let normals = (width == Some(6)).then_some(normals);
    Ok((points, normals))
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

enum PlyProperty {
    Scalar(String),
    List,
}

fn parse_ply(text: &str) -> Result<Parsed> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let perr = |line: usize, message: &str| Error::Parse {
        line,
        message: message.to_string(),
    };

    match lines.next() {
        Some((_, "ply")) => {}
        Some((n, _)) => return Err(perr(n, "missing 'ply' magic")),
        None => return Err(perr(0, "empty file")),
    }

    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let (n, line) = lines.next().ok_or_else(|| perr(0, "missing end_header"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(perr(n, "only ASCII PLY is supported")),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| perr(n, "bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", ..] => elements
                .last_mut()
                .ok_or_else(|| perr(n, "property before element"))?
                .properties
                .push(PlyProperty::List),
            ["property", _ty, name] => elements
                .last_mut()
                .ok_or_else(|| perr(n, "property before element"))?
                .properties
                .push(PlyProperty::Scalar(name.to_string())),
            _ => return Err(perr(n, "unrecognized header line")),
        }
    }

    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut has_normals = false;
    for element in &elements {
        if element.name != "vertex" {
            for _ in 0..element.count {
                lines
                    .next()
                    .ok_or_else(|| perr(0, "unexpected end of file"))?;
            }
            continue;
        }
        let find = |key: &str| {
            element.properties.iter().position(|p| match p {
                PlyProperty::Scalar(name) => name == key,
                PlyProperty::List => false,
            })
        };
        if element
            .properties
            .iter()
            .any(|p| matches!(p, PlyProperty::List))
        {
            return Err(perr(0, "list properties on vertices are not supported"));
        }
        let xyz = [find("x"), find("y"), find("z")];
        let [Some(ix), Some(iy), Some(iz)] = xyz else {
            return Err(perr(0, "vertex element lacks x, y, z"));
        };
        let nxyz = match [find("nx"), find("ny"), find("nz")] {
            [Some(a), Some(b), Some(c)] => Some([a, b, c]),
            _ => None,
        };
        has_normals = nxyz.is_some();
        for _ in 0..element.count {
            let (n, line) = lines
                .next()
                .ok_or_else(|| perr(0, "unexpected end of file in vertex data"))?;
            let v = parse_numbers(line, n)?;
            if v.len() != element.properties.len() {
                return Err(perr(
                    n,
                    &format!(
                        "expected {} vertex values, found {}",
                        element.properties.len(),
                        v.len()
                    ),
                ));
            }
            points.push(Vector3::new(v[ix], v[iy], v[iz]));
            if let Some([a, b, c]) = nxyz {
                normals.push(Vector3::new(v[a], v[b], v[c]));
            }
        }
    }
    Ok((points, has_normals.then_some(normals)))
}

fn parse_obj(text: &str) -> Result<Vec<Point>> {
    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let Some(rest) = line.strip_prefix("v ").or_else(|| line.strip_prefix("v\t")) else {
            continue;
        };
        let v = parse_numbers(rest, idx + 1)?;
        if v.len() < 3 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("vertex needs 3 coordinates, found {}", v.len()),
            });
        }
        points.push(Vector3::new(v[0], v[1], v[2]));
    }
    Ok(points)
}

/// Writes `x y z` (or `x y z nx ny nz` when normals are present) rows with
/// 17 significant digits.
pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    write_atomic(path, |w| write_xyz_to(w, cloud.points(), cloud.normals()))
}

pub(crate) fn write_xyz_to(
    w: &mut dyn Write,
    points: &[Point],
    normals: Option<&[Point]>,
) -> std::io::Result<()> {
    for (i, p) in points.iter().enumerate() {
        write!(w, "{} {} {}", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z))?;
        if let Some(ns) = normals {
            let n = ns[i];
            write!(w, " {} {} {}", fmt_f64(n.x), fmt_f64(n.y), fmt_f64(n.z))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{generate_sphere_nodes, SphereLevel};

    #[test]
    fn three_rows_is_too_few() {
        let err = parse_cloud("0 0 1\n0 1 0\n1 0 0\n", CloudFormat::Xyz).unwrap_err();
        assert!(matches!(err, Error::TooFewPoints(3)));
    }

    #[test]
    fn xyz_comments_and_normals() {
        let text = "# header\n0 0 1 0 0 2\n0 1 0 0 3 0 # trailing\n\n1 0 0 4 0 0\n0 0 -1 0 0 -1\n";
        let cloud = parse_cloud(text, CloudFormat::Xyz).unwrap();
        assert_eq!(cloud.len(), 4);
        assert_eq!(cloud.normals().unwrap()[0], Vector3::z());
        assert_eq!(cloud.normals().unwrap()[1], Vector3::y());
    }

    #[test]
    fn xyz_arity_errors() {
        let err = parse_cloud("0 0 1\n0 1\n", CloudFormat::Xyz).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_cloud("0 0 1\n0 1 0 1 0 0\n", CloudFormat::Xyz).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_cloud("0 0 x\n", CloudFormat::Xyz).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn xyz_duplicates_rejected() {
        let err = parse_cloud("0 0 1\n0 1 0\n1 0 0\n0 0 1\n", CloudFormat::Xyz).unwrap_err();
        assert!(matches!(err, Error::DuplicatePoint { .. }));
    }

    #[test]
    fn xyz_sphere_roundtrip() {
        let sphere = generate_sphere_nodes(SphereLevel::new(3).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_xyz_to(&mut buf, sphere.points(), None).unwrap();
        let back = parse_cloud(std::str::from_utf8(&buf).unwrap(), CloudFormat::Xyz).unwrap();
        assert_eq!(back.len(), 258);
        assert!(!back.has_normals());
        assert_eq!(back.points(), sphere.points());
    }

    #[test]
    fn ply_with_normals_and_faces() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 4\n\
            property float x\nproperty float y\nproperty float z\n\
            property float nx\nproperty float ny\nproperty float nz\n\
            property uchar red\n\
            element face 1\nproperty list uchar int vertex_indices\nend_header\n\
            0 0 1 0 0 3 255\n0 1 0 0 0.5 0 255\n1 0 0 2 0 0 255\n0 0 -1 0 0 -1 255\n3 0 1 2\n";
        let cloud = parse_cloud(text, CloudFormat::Ply).unwrap();
        assert_eq!(cloud.len(), 4);
        let ns = cloud.normals().unwrap();
        assert_eq!(ns[0], Vector3::z());
        assert_eq!(ns[1], Vector3::y());
        assert_eq!(ns[2], Vector3::x());
    }

    #[test]
    fn ply_without_normals_and_binary_rejected() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty double x\n\
            property double y\nproperty double z\nend_header\n0 0 1\n0 1 0\n1 0 0\n0 0 -1\n";
        let cloud = parse_cloud(text, CloudFormat::Ply).unwrap();
        assert!(!cloud.has_normals());
        let bin = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(matches!(
            parse_cloud(bin, CloudFormat::Ply),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn obj_vertex_lines_only() {
        let text = "# obj\nv 0 0 1\nvn 0 0 1\nv 0 1 0\nv 1 0 0 1.0\nvt 0 0\nv 0 0 -1\nf 1 2 3\n";
        let cloud = parse_cloud(text, CloudFormat::ObjVertices).unwrap();
        assert_eq!(cloud.len(), 4);
        assert!(!cloud.has_normals());
    }
}
