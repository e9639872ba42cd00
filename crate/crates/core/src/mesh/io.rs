//! ASCII OFF and PLY readers/writers plus correspondence files.
//!
//! Coordinates are written with Rust's shortest round-trip float formatting,
//! so write-then-read reproduces every vertex bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};

/// Raw vertex/triangle soup as found in a file, before validation,
/// degenerate-face filtering and normalization.
#[derive(Debug, Clone, Default)]
pub struct RawMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    PlyAscii,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("off") => Some(MeshFormat::Off),
            Some("ply") => Some(MeshFormat::PlyAscii),
            _ => None,
        }
    }
}

fn non_comment_lines(reader: impl BufRead) -> impl Iterator<Item = std::io::Result<String>> {
    reader.lines().filter(|l| match l {
        Ok(s) => {
            let t = s.trim();
            !t.is_empty() && !t.starts_with('#')
        }
        Err(_) => true,
    })
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<RawMesh> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| Error::parse(path, "unknown extension; expected .off or .ply"))?;
    read_raw_as(path, format)
}

pub fn read_raw_as(path: impl AsRef<Path>, format: MeshFormat) -> Result<RawMesh> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        MeshFormat::Off => read_off(reader, path),
        MeshFormat::PlyAscii => read_ply(reader, path),
    }
}

fn read_off(reader: impl BufRead, path: &Path) -> Result<RawMesh> {
    let mut lines = non_comment_lines(reader);
    let mut header = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let mut header_t = header.trim().to_string();
    if !header_t.starts_with("OFF") {
        return Err(Error::parse(path, "missing OFF header"));
    }
    // counts may share the header line ("OFF 8 12 0") or follow it
    header_t = header_t[3..].trim().to_string();
    if header_t.is_empty() {
        header = lines
            .next()
            .ok_or_else(|| Error::parse(path, "missing count line"))?
            .map_err(|e| Error::io(path, e))?;
        header_t = header.trim().to_string();
    }
    let counts: Vec<usize> = header_t
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(path, format!("bad count line: {header_t:?}")))?;
    if counts.len() < 2 {
        return Err(Error::parse(path, "count line needs at least nv nf"));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut mesh = RawMesh::default();
    mesh.vertices.reserve(nv);
    for i in 0..nv {
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(path, format!("expected {nv} vertices, got {i}")))?
            .map_err(|e| Error::io(path, e))?;
        mesh.vertices.push(parse_vertex(&line, path)?);
    }
    mesh.triangles.reserve(nf);
    for i in 0..nf {
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(path, format!("expected {nf} faces, got {i}")))?
            .map_err(|e| Error::io(path, e))?;
        mesh.triangles.push(parse_face(&line, i, path)?);
    }
    Ok(mesh)
}

fn read_ply(reader: impl BufRead, path: &Path) -> Result<RawMesh> {
    let mut lines = reader.lines();
    let magic = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    if magic.trim() != "ply" {
        return Err(Error::parse(path, "missing ply magic"));
    }

    let mut nv = None;
    let mut nf = None;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    for line in lines.by_ref() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim().to_string();
        if line.is_empty() || line.starts_with("comment") {
            continue;
        }
        if line == "end_header" {
            break;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", enc, _] => {
                if *enc != "ascii" {
                    return Err(Error::parse(path, format!("unsupported encoding {enc}")));
                }
            }
            ["element", "vertex", count] => {
                nv = Some(count.parse::<usize>().map_err(|_| {
                    Error::parse(path, format!("bad vertex count {count}"))
                })?);
                in_vertex_element = true;
            }
            ["element", "face", count] => {
                nf = Some(count.parse::<usize>().map_err(|_| {
                    Error::parse(path, format!("bad face count {count}"))
                })?);
                in_vertex_element = false;
            }
            ["element", ..] => {
                in_vertex_element = false;
            }
            ["property", "list", ..] => {}
            ["property", _ty, name] if in_vertex_element => {
                vertex_props.push((*name).to_string());
            }
            ["property", ..] => {}
            _ => return Err(Error::parse(path, format!("bad header line: {line:?}"))),
        }
    }
    let nv = nv.ok_or_else(|| Error::parse(path, "no vertex element"))?;
    let nf = nf.unwrap_or(0);
    let ix = vertex_props.iter().position(|p| p == "x");
    let iy = vertex_props.iter().position(|p| p == "y");
    let iz = vertex_props.iter().position(|p| p == "z");
    let (ix, iy, iz) = match (ix, iy, iz) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::parse(path, "vertex element lacks x/y/z properties")),
    };

    let mut data_lines = non_comment_lines_from(lines);
    let mut mesh = RawMesh::default();
    mesh.vertices.reserve(nv);
    for i in 0..nv {
        let line = data_lines
            .next()
            .ok_or_else(|| Error::parse(path, format!("expected {nv} vertices, got {i}")))?
            .map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < vertex_props.len() {
            return Err(Error::parse(path, format!("short vertex line: {line:?}")));
        }
        let get = |idx: usize| -> Result<f64> {
            fields[idx]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, format!("bad float {:?}", fields[idx])))
        };
        mesh.vertices.push(Point3::new(get(ix)?, get(iy)?, get(iz)?));
    }
    mesh.triangles.reserve(nf);
    for i in 0..nf {
        let line = data_lines
            .next()
            .ok_or_else(|| Error::parse(path, format!("expected {nf} faces, got {i}")))?
            .map_err(|e| Error::io(path, e))?;
        mesh.triangles.push(parse_face(&line, i, path)?);
    }
    Ok(mesh)
}

fn non_comment_lines_from(
    lines: std::io::Lines<impl BufRead>,
) -> impl Iterator<Item = std::io::Result<String>> {
    lines.filter(|l| match l {
        Ok(s) => !s.trim().is_empty(),
        Err(_) => true,
    })
}

fn parse_vertex(line: &str, path: &Path) -> Result<Point3<f64>> {
    let mut it = line.split_whitespace();
    let mut coord = [0.0f64; 3];
    for c in &mut coord {
        let tok = it
            .next()
            .ok_or_else(|| Error::parse(path, format!("short vertex line: {line:?}")))?;
        *c = tok
            .parse::<f64>()
            .map_err(|_| Error::parse(path, format!("bad float {tok:?}")))?;
    }
    Ok(Point3::new(coord[0], coord[1], coord[2]))
}

fn parse_face(line: &str, face: usize, path: &Path) -> Result<[usize; 3]> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::parse(path, "empty face line"));
    }
    let arity: usize = tokens[0]
        .parse()
        .map_err(|_| Error::parse(path, format!("bad face arity {:?}", tokens[0])))?;
    if arity != 3 {
        return Err(Error::NonTriangleFace { face, arity });
    }
    if tokens.len() < 4 {
        return Err(Error::parse(path, format!("short face line: {line:?}")));
    }
    let mut tri = [0usize; 3];
    for (slot, tok) in tri.iter_mut().zip(&tokens[1..4]) {
        *slot = tok
            .parse()
            .map_err(|_| Error::parse(path, format!("bad index {tok:?}")))?;
    }
    Ok(tri)
}

pub fn write_off(
    path: impl AsRef<Path>,
    vertices: &[Point3<f64>],
    triangles: &[[usize; 3]],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        writeln!(w, "OFF")?;
        writeln!(w, "{} {} 0", vertices.len(), triangles.len())?;
        for v in vertices {
            writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
        }
        for t in triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn write_ply(
    path: impl AsRef<Path>,
    vertices: &[Point3<f64>],
    triangles: &[[usize; 3]],
) -> Result<()> {
    write_ply_impl(path.as_ref(), vertices, triangles, None)
}

/// PLY with per-vertex uchar RGB colors; used by the embedding debug export.
pub fn write_ply_with_colors(
    path: impl AsRef<Path>,
    vertices: &[Point3<f64>],
    triangles: &[[usize; 3]],
    colors: &[[u8; 3]],
) -> Result<()> {
    write_ply_impl(path.as_ref(), vertices, triangles, Some(colors))
}

fn write_ply_impl(
    path: &Path,
    vertices: &[Point3<f64>],
    triangles: &[[usize; 3]],
    colors: Option<&[[u8; 3]]>,
) -> Result<()> {
    if let Some(c) = colors {
        if c.len() != vertices.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} colors for {} vertices",
                c.len(),
                vertices.len()
            )));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "element vertex {}", vertices.len())?;
        writeln!(w, "property double x")?;
        writeln!(w, "property double y")?;
        writeln!(w, "property double z")?;
        if colors.is_some() {
            writeln!(w, "property uchar red")?;
            writeln!(w, "property uchar green")?;
            writeln!(w, "property uchar blue")?;
        }
        writeln!(w, "element face {}", triangles.len())?;
        writeln!(w, "property list uchar int vertex_indices")?;
        writeln!(w, "end_header")?;
        for (i, v) in vertices.iter().enumerate() {
            match colors {
                Some(c) => writeln!(
                    w,
                    "{} {} {} {} {} {}",
                    v.x, v.y, v.z, c[i][0], c[i][1], c[i][2]
                )?,
                None => writeln!(w, "{} {} {}", v.x, v.y, v.z)?,
            }
        }
        for t in triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Correspondence file: one index per line, line i holding the source vertex
/// matched to vertex i. `one_based` shifts indices up by one on write.
pub fn write_correspondence(
    path: impl AsRef<Path>,
    assignments: &[usize],
    one_based: bool,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let offset = usize::from(one_based);
    let res = (|| -> std::io::Result<()> {
        for &a in assignments {
            writeln!(w, "{}", a + offset)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn read_correspondence(path: impl AsRef<Path>, one_based: bool) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in non_comment_lines(BufReader::new(file)) {
        let line = line.map_err(|e| Error::io(path, e))?;
        let v: usize = line
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, format!("bad index {line:?}")))?;
        if one_based {
            if v == 0 {
                return Err(Error::parse(path, "index 0 in one-based file"));
            }
            out.push(v - 1);
        } else {
            out.push(v);
        }
    }
    Ok(out)
}
