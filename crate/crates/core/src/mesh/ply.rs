//! PLY reading and writing (ascii and binary little-endian).

use std::fmt::Write as _;

use super::trimesh::TriMesh;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

pub fn write_ply(mesh: &TriMesh, format: PlyFormat) -> Vec<u8> {
    let mut h = String::from("ply\n");
    h.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(h, "element vertex {}", mesh.vertices.len());
    h.push_str("property float x\nproperty float y\nproperty float z\n");
    if mesh.quality.is_some() {
        h.push_str("property float quality\n");
    }
    let _ = writeln!(h, "element face {}", mesh.triangles.len());
    h.push_str("property list uchar int vertex_indices\nend_header\n");
    let mut out = h.into_bytes();
    match format {
        PlyFormat::Ascii => {
            let mut s = String::new();
            for (i, v) in mesh.vertices.iter().enumerate() {
                let _ = write!(s, "{} {} {}", v[0] as f32, v[1] as f32, v[2] as f32);
                if let Some(q) = &mesh.quality {
                    let _ = write!(s, " {}", q[i] as f32);
                }
                s.push('\n');
            }
            for t in &mesh.triangles {
                let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
            }
            out.extend_from_slice(s.as_bytes());
        }
        PlyFormat::BinaryLittleEndian => {
            for (i, v) in mesh.vertices.iter().enumerate() {
                for c in v {
                    out.extend_from_slice(&(*c as f32).to_le_bytes());
                }
                if let Some(q) = &mesh.quality {
                    out.extend_from_slice(&(q[i] as f32).to_le_bytes());
                }
            }
            for t in &mesh.triangles {
                out.push(3);
                for &i in t {
                    out.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return Err(Error::Ply(format!("unknown property type {s:?}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::PlyTruncated(format!("payload ends inside {what}")));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

pub fn read_ply(bytes: &[u8]) -> Result<TriMesh> {
    let end = find_subslice(bytes, b"end_header").ok_or_else(|| Error::Ply("missing end_header".into()))?;
    let mut body = end + b"end_header".len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(Error::Ply("end_header must end its line".into()));
    }
    body += 1;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Ply("header is not UTF-8".into()))?;
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(Error::Ply("missing ply magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(Error::Ply(format!("unsupported format {other:?}"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::Ply(format!("bad element count {count:?}")))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before element".into()))?
                .props
                .push(Property::List(name.to_string(), Scalar::parse(ct)?, Scalar::parse(it)?)),
            ["property", t, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before element".into()))?
                .props
                .push(Property::Scalar(name.to_string(), Scalar::parse(t)?)),
            _ => return Err(Error::Ply(format!("unrecognized header line {line:?}"))),
        }
    }
    let format = format.ok_or_else(|| Error::Ply("missing format line".into()))?;
    for e in &elements {
        if e.name != "vertex" && e.name != "face" {
            return Err(Error::Ply(format!("unknown element {:?}", e.name)));
        }
    }

    let mut mesh = TriMesh::default();
    let payload = &bytes[body..];
    let mut ascii_tokens = match format {
        PlyFormat::Ascii => Some(
            std::str::from_utf8(payload)
                .map_err(|_| Error::Ply("ascii payload is not UTF-8".into()))?
                .split_ascii_whitespace(),
        ),
        PlyFormat::BinaryLittleEndian => None,
    };
    let mut cur = Cursor { data: payload, pos: 0 };
    let mut read = |ty: Scalar, what: &str| -> Result<f64> {
        match ascii_tokens.as_mut() {
            Some(tokens) => {
                let t = tokens
                    .next()
                    .ok_or_else(|| Error::PlyTruncated(format!("payload ends inside {what}")))?;
                let bad = |_| Error::Ply(format!("bad number {t:?} in {what}"));
                match ty {
                    Scalar::F32 => t.parse::<f32>().map(f64::from).map_err(bad),
                    _ => t.parse::<f64>().map_err(bad),
                }
            }
            None => Ok(ty.read_le(cur.take(ty.size(), what)?)),
        }
    };

    for e in &elements {
        if e.name == "vertex" {
            let find = |n: &str| {
                e.props
                    .iter()
                    .position(|p| matches!(p, Property::Scalar(name, _) if name == n))
            };
            let (xi, yi, zi) = match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) => (x, y, z),
                _ => return Err(Error::Ply("vertex element lacks x, y or z".into())),
            };
            let qi = find("quality");
            mesh.vertices.reserve(e.count);
            let mut quality = Vec::new();
            let mut vals = vec![0.0; e.props.len()];
            for _ in 0..e.count {
                for (k, p) in e.props.iter().enumerate() {
                    match p {
                        Property::Scalar(_, t) => vals[k] = read(*t, "vertex")?,
                        Property::List(..) => return Err(Error::Ply("list property on vertex".into())),
                    }
                }
                mesh.vertices.push([vals[xi], vals[yi], vals[zi]]);
                if let Some(q) = qi {
                    quality.push(vals[q]);
                }
            }
            if qi.is_some() {
                mesh.quality = Some(quality);
            }
        } else {
            mesh.triangles.reserve(e.count);
            for _ in 0..e.count {
                for p in &e.props {
                    match p {
                        Property::List(name, ct, it) => {
                            let n = read(*ct, "face")? as usize;
                            let mut idx = Vec::with_capacity(n);
                            for _ in 0..n {
                                let i = read(*it, "face")?;
                                if i < 0.0 || i.fract() != 0.0 {
                                    return Err(Error::Ply(format!("bad vertex index {i}")));
                                }
                                idx.push(i as u32);
                            }
                            if name == "vertex_indices" || name == "vertex_index" {
                                if n < 3 {
                                    return Err(Error::Ply(format!("face with {n} vertices")));
                                }
                                for k in 1..n - 1 {
                                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                                }
                            }
                        }
                        Property::Scalar(_, t) => {
                            read(*t, "face")?;
                        }
                    }
                }
            }
        }
    }
    mesh.validate().map_err(|e| Error::Ply(e.to_string()))?;
    Ok(mesh)
}

fn find_subslice(h: &[u8], n: &[u8]) -> Option<usize> {
    h.windows(n.len()).position(|w| w == n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::uv_sphere;

    fn sample() -> TriMesh {
        let mut s = uv_sphere([1.5, -2.0, 3.25], 4.0, 6, 7);
        s.quality = Some((0..s.vertices.len()).map(|i| i as f64 / 100.0).collect());
        s
    }

    fn close(a: &TriMesh, b: &TriMesh) {
        assert_eq!(a.triangles, b.triangles);
        assert_eq!(a.vertices.len(), b.vertices.len());
        for (p, q) in a.vertices.iter().zip(&b.vertices) {
            for d in 0..3 {
                assert_eq!(p[d] as f32, q[d] as f32);
            }
        }
        let (qa, qb) = (a.quality.as_ref().unwrap(), b.quality.as_ref().unwrap());
        for (x, y) in qa.iter().zip(qb) {
            assert_eq!(*x as f32, *y as f32);
        }
    }

    #[test]
    fn round_trip_both_formats() {
        let m = sample();
        for f in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            close(&m, &read_ply(&write_ply(&m, f)).unwrap());
        }
    }

    #[test]
    fn formats_agree() {
        let m = sample();
        let a = read_ply(&write_ply(&m, PlyFormat::Ascii)).unwrap();
        let b = read_ply(&write_ply(&m, PlyFormat::BinaryLittleEndian)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_payload() {
        let m = sample();
        for f in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let bytes = write_ply(&m, f);
            let text = String::from_utf8_lossy(&bytes).replace(
                &format!("element vertex {}", m.vertices.len()),
                &format!("element vertex {}", m.vertices.len() + 1000),
            );
            let err = read_ply(text.as_bytes()).unwrap_err();
            assert!(err.to_string().starts_with("truncated"), "{err}");
        }
    }

    #[test]
    fn header_errors() {
        assert!(read_ply(b"ply\nformat ascii 1.0\nelement vertex 0\nelement edge 0\nend_header\n").is_err());
        assert!(read_ply(b"plx\nformat ascii 1.0\nend_header\n").is_err());
        assert!(read_ply(b"ply\nformat ascii 1.0\n").is_err());
        assert!(read_ply(b"ply\nformat binary_big_endian 1.0\nend_header\n").is_err());
    }
}
