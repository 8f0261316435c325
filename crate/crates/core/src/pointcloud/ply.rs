//! PLY point-cloud I/O (`ascii` and `binary_little_endian`).
//!
//! Reads the `vertex` element's `x y z` and, when all three are present,
//! `nx ny nz`. Other properties and elements are skipped. Writes doubles so
//! clouds round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy)]
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
    fn parse(name: &str) -> Option<Self> {
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
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
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

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes).map_err(|msg| Error::format(path, msg))
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_ply(cloud, format);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_ply(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    let mut out = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    out.extend_from_slice(format!("ply\nformat {fmt} 1.0\nelement vertex {}\n", cloud.len()).as_bytes());
    for p in ["x", "y", "z"] {
        out.extend_from_slice(format!("property double {p}\n").as_bytes());
    }
    if cloud.normals().is_some() {
        for p in ["nx", "ny", "nz"] {
            out.extend_from_slice(format!("property double {p}\n").as_bytes());
        }
    }
    out.extend_from_slice(b"end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        let mut row: Vec<f64> = vec![p.x, p.y, p.z];
        if let Some(ns) = cloud.normals() {
            row.extend_from_slice(&[ns[i].x, ns[i].y, ns[i].z]);
        }
        match format {
            PlyFormat::Ascii => {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
            PlyFormat::BinaryLittleEndian => {
                for v in row {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

fn parse_ply(bytes: &[u8]) -> std::result::Result<PointCloud, String> {
    let header_end = find_subslice(bytes, b"end_header")
        .ok_or_else(|| "missing end_header".to_string())?;
    let mut body_start = header_end + b"end_header".len();
    // header line ends with \n or \r\n
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| "header is not utf-8".to_string())?;
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err("missing ply magic".into());
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(format!("unsupported format {other}")),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| format!("bad element count {count}"))?,
                props: Vec::new(),
            }),
            ["property", "list", c, i, _name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                let count = Scalar::parse(c).ok_or_else(|| format!("bad type {c}"))?;
                let item = Scalar::parse(i).ok_or_else(|| format!("bad type {i}"))?;
                el.props.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                let ty = Scalar::parse(ty).ok_or_else(|| format!("bad type {ty}"))?;
                el.props.push(Property::Scalar { name: name.to_string(), ty });
            }
            _ => return Err(format!("unrecognized header line: {line}")),
        }
    }
    let format = format.ok_or("missing format line")?;
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or("no vertex element")?;
    let vertex = &elements[vertex_pos];
    let slot = |n: &str| {
        vertex
            .props
            .iter()
            .position(|p| matches!(p, Property::Scalar { name, .. } if name == n))
    };
    let (xi, yi, zi) = match (slot("x"), slot("y"), slot("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err("vertex element lacks x/y/z".into()),
    };
    let normal_slots = match (slot("nx"), slot("ny"), slot("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };

    let rows = match format {
        PlyFormat::Ascii => read_ascii_rows(&bytes[body_start..], &elements, vertex_pos)?,
        PlyFormat::BinaryLittleEndian => read_binary_rows(&bytes[body_start..], &elements, vertex_pos)?,
    };

    let points: Vec<Vector3<f64>> = rows.iter().map(|r| Vector3::new(r[xi], r[yi], r[zi])).collect();
    let mut cloud = PointCloud::new(points).map_err(|e| e.to_string())?;
    if let Some((a, b, c)) = normal_slots {
        let normals: Vec<Vector3<f64>> = rows.iter().map(|r| Vector3::new(r[a], r[b], r[c])).collect();
        // normals written as float lose precision; renormalize
        let normals = normals
            .into_iter()
            .map(|n| if n.norm() > 0.0 { n.normalize() } else { Vector3::z() })
            .collect();
        cloud.set_normals(normals).map_err(|e| e.to_string())?;
    }
    Ok(cloud)
}

fn read_ascii_rows(body: &[u8], elements: &[Element], vertex_pos: usize) -> std::result::Result<Vec<Vec<f64>>, String> {
    let text = std::str::from_utf8(body).map_err(|_| "ascii body is not utf-8".to_string())?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut rows = Vec::new();
    for (ei, el) in elements.iter().enumerate() {
        for k in 0..el.count {
            let line = lines.next().ok_or_else(|| format!("truncated {} element at row {k}", el.name))?;
            if ei != vertex_pos {
                continue;
            }
            let mut toks = line.split_whitespace();
            let mut row = Vec::with_capacity(el.props.len());
            for p in &el.props {
                match p {
                    Property::Scalar { .. } => {
                        let t = toks.next().ok_or_else(|| format!("short vertex row {k}"))?;
                        row.push(t.parse::<f64>().map_err(|_| format!("bad number {t}"))?);
                    }
                    Property::List { .. } => {
                        let n: usize = toks
                            .next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| format!("bad list count in row {k}"))?;
                        for _ in 0..n {
                            toks.next();
                        }
                        row.push(f64::NAN);
                    }
                }
            }
            rows.push(row);
        }
        if ei == vertex_pos {
            break;
        }
    }
    Ok(rows)
}

fn read_binary_rows(body: &[u8], elements: &[Element], vertex_pos: usize) -> std::result::Result<Vec<Vec<f64>>, String> {
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> std::result::Result<&[u8], String> {
        let s = body.get(*off..*off + n).ok_or("truncated binary body")?;
        *off += n;
        Ok(s)
    };
    let mut rows = Vec::new();
    for (ei, el) in elements.iter().enumerate() {
        for _ in 0..el.count {
            let mut row = Vec::with_capacity(el.props.len());
            for p in &el.props {
                match *p {
                    Property::Scalar { ty, .. } => row.push(ty.read_le(take(&mut off, ty.size())?)),
                    Property::List { count, item } => {
                        let n = count.read_le(take(&mut off, count.size())?) as usize;
                        take(&mut off, n * item.size())?;
                        row.push(f64::NAN);
                    }
                }
            }
            if ei == vertex_pos {
                rows.push(row);
            }
        }
        if ei == vertex_pos {
            break;
        }
    }
    Ok(rows)
}

fn find_subslice(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}
