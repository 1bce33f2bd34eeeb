//! Mesh file loading and saving: OBJ (v/f records), STL (binary and ASCII)
//! and PLY (ASCII and binary little-endian). Loading validates the mesh but
//! never welds vertices.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::TriMesh;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Obj,
    /// Binary STL.
    Stl,
    StlAscii,
    /// Binary little-endian PLY (the default output format).
    Ply,
    PlyAscii,
}

impl Format {
    pub fn from_name(name: &str) -> Option<Format> {
        match name.to_ascii_lowercase().as_str() {
            "obj" => Some(Format::Obj),
            "stl" => Some(Format::Stl),
            "stl-ascii" => Some(Format::StlAscii),
            "ply" => Some(Format::Ply),
            "ply-ascii" => Some(Format::PlyAscii),
            _ => None,
        }
    }

    pub fn from_path(path: &Path) -> Option<Format> {
        let ext = path.extension()?.to_str()?;
        match ext.to_ascii_lowercase().as_str() {
            "obj" => Some(Format::Obj),
            "stl" => Some(Format::Stl),
            "ply" => Some(Format::Ply),
            _ => None,
        }
    }
}

/// Load and validate a mesh, dispatching on the file extension.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let format = Format::from_path(path).ok_or_else(|| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        ext: path
            .extension()
            .map(|e| e.to_string_lossy().into_owned())
            .unwrap_or_default(),
    })?;
    let mesh = match format {
        Format::Obj => load_obj(path)?,
        Format::Stl | Format::StlAscii => load_stl(path)?,
        Format::Ply | Format::PlyAscii => load_ply(path)?,
    };
    mesh.validate()
}

/// Save a mesh; the format defaults to binary PLY when the extension gives
/// no better hint.
pub fn save_mesh(mesh: &TriMesh, path: &Path, format: Option<Format>) -> Result<()> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let format = format
        .or_else(|| Format::from_path(path))
        .unwrap_or(Format::Ply);
    match format {
        Format::Obj => save_obj(mesh, path),
        Format::Stl => save_stl_binary(mesh, path),
        Format::StlAscii => save_stl_ascii(mesh, path),
        Format::Ply => save_ply(mesh, path, true),
        Format::PlyAscii => save_ply(mesh, path, false),
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

// ---------------------------------------------------------------- OBJ

fn load_obj(path: &Path) -> Result<TriMesh> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces = Vec::new();

    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let tok = it
                        .next()
                        .ok_or_else(|| parse_err(path, ln + 1, "vertex needs 3 coordinates"))?;
                    *c = tok
                        .parse()
                        .map_err(|_| parse_err(path, ln + 1, format!("bad coordinate {tok:?}")))?;
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let raw: i64 = first
                        .parse()
                        .map_err(|_| parse_err(path, ln + 1, format!("bad face index {tok:?}")))?;
                    let resolved = if raw > 0 {
                        raw - 1
                    } else if raw < 0 {
                        vertices.len() as i64 + raw
                    } else {
                        return Err(parse_err(path, ln + 1, "face index 0 is not allowed"));
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(parse_err(
                            path,
                            ln + 1,
                            format!("face index {raw} out of range"),
                        ));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(parse_err(path, ln + 1, "face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {} // vt/vn/usemtl/comments are ignored
        }
    }
    Ok(TriMesh::new(vertices, faces))
}

fn save_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in &mesh.vertices {
        // `{}` prints the shortest representation that round-trips f64
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- STL

fn load_stl(path: &Path) -> Result<TriMesh> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() >= 84 {
        let count = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if bytes.len() == 84 + 50 * count {
            return load_stl_binary(&bytes[84..], count);
        }
    }
    load_stl_ascii(path, &bytes)
}

fn load_stl_binary(mut body: &[u8], count: usize) -> Result<TriMesh> {
    let mut vertices = Vec::with_capacity(count * 3);
    let mut faces = Vec::with_capacity(count);
    for i in 0..count {
        for _ in 0..3 {
            body.read_f32::<LittleEndian>()?; // normal, recomputed on demand
        }
        for _ in 0..3 {
            let x = body.read_f32::<LittleEndian>()? as f64;
            let y = body.read_f32::<LittleEndian>()? as f64;
            let z = body.read_f32::<LittleEndian>()? as f64;
            vertices.push(Vec3::new(x, y, z));
        }
        body.read_u16::<LittleEndian>()?;
        let b = (i * 3) as u32;
        faces.push([b, b + 1, b + 2]);
    }
    Ok(TriMesh::new(vertices, faces))
}

fn load_stl_ascii(path: &Path, bytes: &[u8]) -> Result<TriMesh> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| parse_err(path, 0, "neither valid binary nor ASCII STL"))?;
    if !text.trim_start().starts_with("solid") {
        return Err(parse_err(path, 1, "missing `solid` header"));
    }
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut tri: Vec<Vec3> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("vertex") => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let tok = it
                        .next()
                        .ok_or_else(|| parse_err(path, ln + 1, "vertex needs 3 coordinates"))?;
                    *c = tok
                        .parse()
                        .map_err(|_| parse_err(path, ln + 1, format!("bad coordinate {tok:?}")))?;
                }
                tri.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("endfacet") => {
                if tri.len() != 3 {
                    return Err(parse_err(path, ln + 1, "facet does not have 3 vertices"));
                }
                let b = vertices.len() as u32;
                vertices.extend(tri.drain(..));
                faces.push([b, b + 1, b + 2]);
            }
            _ => {}
        }
    }
    Ok(TriMesh::new(vertices, faces))
}

fn save_stl_binary(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&[0u8; 80])?;
    w.write_u32::<LittleEndian>(mesh.faces.len() as u32)?;
    for f in 0..mesh.faces.len() {
        let n = mesh.face_normal(f);
        for c in [n.x, n.y, n.z] {
            w.write_f32::<LittleEndian>(c as f32)?;
        }
        for p in mesh.face_points(f) {
            for c in [p.x, p.y, p.z] {
                w.write_f32::<LittleEndian>(c as f32)?;
            }
        }
        w.write_u16::<LittleEndian>(0)?;
    }
    w.flush()?;
    Ok(())
}

fn save_stl_ascii(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "solid sparcubes")?;
    for f in 0..mesh.faces.len() {
        let n = mesh.face_normal(f);
        writeln!(w, "  facet normal {} {} {}", n.x, n.y, n.z)?;
        writeln!(w, "    outer loop")?;
        for p in mesh.face_points(f) {
            writeln!(w, "      vertex {} {} {}", p.x, p.y, p.z)?;
        }
        writeln!(w, "    endloop")?;
        writeln!(w, "  endfacet")?;
    }
    writeln!(w, "endsolid sparcubes")?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- PLY

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(tok: &str) -> Option<PlyType> {
        match tok {
            "char" | "int8" => Some(PlyType::I8),
            "uchar" | "uint8" => Some(PlyType::U8),
            "short" | "int16" => Some(PlyType::I16),
            "ushort" | "uint16" => Some(PlyType::U16),
            "int" | "int32" => Some(PlyType::I32),
            "uint" | "uint32" => Some(PlyType::U32),
            "float" | "float32" => Some(PlyType::F32),
            "double" | "float64" => Some(PlyType::F64),
            _ => None,
        }
    }

    fn read_binary(&self, r: &mut impl Read) -> Result<f64> {
        Ok(match self {
            PlyType::I8 => r.read_i8()? as f64,
            PlyType::U8 => r.read_u8()? as f64,
            PlyType::I16 => r.read_i16::<LittleEndian>()? as f64,
            PlyType::U16 => r.read_u16::<LittleEndian>()? as f64,
            PlyType::I32 => r.read_i32::<LittleEndian>()? as f64,
            PlyType::U32 => r.read_u32::<LittleEndian>()? as f64,
            PlyType::F32 => r.read_f32::<LittleEndian>()? as f64,
            PlyType::F64 => r.read_f64::<LittleEndian>()?,
        })
    }
}

#[derive(Debug, Clone)]
enum PlyProp {
    Scalar(String, PlyType),
    List(String, PlyType, PlyType),
}

#[derive(Debug, Clone)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProp>,
}

fn load_ply(path: &Path) -> Result<TriMesh> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut ln = 0usize;
    let read_line = |reader: &mut BufReader<File>, line: &mut String, ln: &mut usize| -> Result<()> {
        line.clear();
        if reader.read_line(line)? == 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: *ln,
                msg: "unexpected end of header".into(),
            });
        }
        *ln += 1;
        Ok(())
    };

    read_line(&mut reader, &mut line, &mut ln)?;
    if line.trim_end() != "ply" {
        return Err(parse_err(path, 1, "missing `ply` magic"));
    }
    let mut binary = false;
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        read_line(&mut reader, &mut line, &mut ln)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("comment") | Some("obj_info") => {}
            Some("format") => match toks.get(1).copied() {
                Some("ascii") => binary = false,
                Some("binary_little_endian") => binary = true,
                other => {
                    return Err(parse_err(path, ln, format!("unsupported format {other:?}")))
                }
            },
            Some("element") => {
                let name = toks
                    .get(1)
                    .ok_or_else(|| parse_err(path, ln, "element needs a name"))?;
                let count: usize = toks
                    .get(2)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(path, ln, "element needs a count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, ln, "property before element"))?;
                if toks.get(1) == Some(&"list") {
                    let ct = PlyType::parse(toks.get(2).copied().unwrap_or(""))
                        .ok_or_else(|| parse_err(path, ln, "bad list count type"))?;
                    let vt = PlyType::parse(toks.get(3).copied().unwrap_or(""))
                        .ok_or_else(|| parse_err(path, ln, "bad list value type"))?;
                    let name = toks
                        .get(4)
                        .ok_or_else(|| parse_err(path, ln, "list property needs a name"))?;
                    el.props.push(PlyProp::List(name.to_string(), ct, vt));
                } else {
                    let t = PlyType::parse(toks.get(1).copied().unwrap_or(""))
                        .ok_or_else(|| parse_err(path, ln, "bad property type"))?;
                    let name = toks
                        .get(2)
                        .ok_or_else(|| parse_err(path, ln, "property needs a name"))?;
                    el.props.push(PlyProp::Scalar(name.to_string(), t));
                }
            }
            Some("end_header") => break,
            other => return Err(parse_err(path, ln, format!("unexpected token {other:?}"))),
        }
    }

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        for _ in 0..el.count {
            let mut xyz = [0.0f64; 3];
            let mut poly: Vec<u32> = Vec::new();
            if binary {
                for prop in &el.props {
                    match prop {
                        PlyProp::Scalar(name, t) => {
                            let v = t.read_binary(&mut reader)?;
                            if is_vertex {
                                match name.as_str() {
                                    "x" => xyz[0] = v,
                                    "y" => xyz[1] = v,
                                    "z" => xyz[2] = v,
                                    _ => {}
                                }
                            }
                        }
                        PlyProp::List(name, ct, vt) => {
                            let n = ct.read_binary(&mut reader)? as usize;
                            for _ in 0..n {
                                let v = vt.read_binary(&mut reader)?;
                                if is_face && (name == "vertex_indices" || name == "vertex_index")
                                {
                                    poly.push(v as u32);
                                }
                            }
                        }
                    }
                }
            } else {
                read_line(&mut reader, &mut line, &mut ln)?;
                let mut toks = line.split_whitespace();
                let next_num = |toks: &mut std::str::SplitWhitespace| -> Result<f64> {
                    toks.next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_err(path, ln, "short data row"))
                };
                for prop in &el.props {
                    match prop {
                        PlyProp::Scalar(name, _) => {
                            let v = next_num(&mut toks)?;
                            if is_vertex {
                                match name.as_str() {
                                    "x" => xyz[0] = v,
                                    "y" => xyz[1] = v,
                                    "z" => xyz[2] = v,
                                    _ => {}
                                }
                            }
                        }
                        PlyProp::List(name, _, _) => {
                            let n = next_num(&mut toks)? as usize;
                            for _ in 0..n {
                                let v = next_num(&mut toks)?;
                                if is_face && (name == "vertex_indices" || name == "vertex_index")
                                {
                                    poly.push(v as u32);
                                }
                            }
                        }
                    }
                }
            }
            if is_vertex {
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            if is_face && poly.len() >= 3 {
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
        }
    }
    Ok(TriMesh::new(vertices, faces))
}

fn save_ply(mesh: &TriMesh, path: &Path, binary: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply")?;
    if binary {
        writeln!(w, "format binary_little_endian 1.0")?;
    } else {
        writeln!(w, "format ascii 1.0")?;
    }
    writeln!(w, "element vertex {}", mesh.vertices.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    writeln!(w, "element face {}", mesh.faces.len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    if binary {
        for v in &mesh.vertices {
            w.write_f64::<LittleEndian>(v.x)?;
            w.write_f64::<LittleEndian>(v.y)?;
            w.write_f64::<LittleEndian>(v.z)?;
        }
        for f in &mesh.faces {
            w.write_u8(3)?;
            for &i in f {
                w.write_i32::<LittleEndian>(i as i32)?;
            }
        }
    } else {
        for v in &mesh.vertices {
            writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
        }
        for f in &mesh.faces {
            writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
        }
    }
    w.flush()?;
    Ok(())
}
