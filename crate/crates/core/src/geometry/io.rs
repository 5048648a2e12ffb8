//! Binary STL, ASCII PLY and the plain-text point/polyline format.
//!
//! Point files hold one `x y z` triple per line. A line reading `#closed`
//! marks the polyline as closed; any other line starting with `#` is a comment.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Point3, Polyline3, TriangleMesh};
use crate::error::{Error, Result};

/// Vertices closer than this are merged when loading STL.
pub const WELD_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    BinaryStl,
    AsciiPly,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("stl") => Ok(MeshFormat::BinaryStl),
            Some("ply") => Ok(MeshFormat::AsciiPly),
            _ => Err(Error::InvalidArgument(format!(
                "cannot infer mesh format from {}",
                path.display()
            ))),
        }
    }
}

/// A loaded mesh and the number of zero-area faces that were discarded.
#[derive(Clone, Debug)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    pub degenerate_faces: usize,
}

pub fn load_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<LoadedMesh> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        MeshFormat::BinaryStl => parse_stl(&bytes),
        MeshFormat::AsciiPly => parse_ply(&bytes),
    }
}

pub fn load_mesh_auto(path: impl AsRef<Path>) -> Result<LoadedMesh> {
    let path = path.as_ref();
    load_mesh(path, MeshFormat::from_path(path)?)
}

pub fn save_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh, format: MeshFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        MeshFormat::BinaryStl => write_stl(mesh),
        MeshFormat::AsciiPly => write_ply(mesh).into_bytes(),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn parse_stl(bytes: &[u8]) -> Result<LoadedMesh> {
    if bytes.len() < 84 {
        return Err(Error::parse(
            bytes.len(),
            "binary STL needs an 80-byte header and a triangle count",
        ));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let expected = 84 + count * 50;
    if bytes.len() < expected {
        let complete = (bytes.len() - 84) / 50;
        return Err(Error::parse(
            84 + complete * 50,
            format!("header declares {count} triangles, file ends inside triangle {complete}"),
        ));
    }
    let mut welder = Welder::default();
    let mut faces = Vec::with_capacity(count);
    for t in 0..count {
        let rec = &bytes[84 + t * 50..84 + (t + 1) * 50];
        let mut idx = [0u32; 3];
        for (k, slot) in idx.iter_mut().enumerate() {
            let base = 12 + k * 12;
            let c: Vec<f64> = (0..3)
                .map(|j| {
                    f32::from_le_bytes(rec[base + j * 4..base + j * 4 + 4].try_into().unwrap())
                        as f64
                })
                .collect();
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(
                    84 + t * 50 + base,
                    format!("triangle {t} has a non-finite coordinate"),
                ));
            }
            *slot = welder.insert(Point3::new(c[0], c[1], c[2]));
        }
        faces.push(idx);
    }
    let (mesh, degenerate_faces) = TriangleMesh::new_dropping_degenerate(welder.vertices, faces)?;
    Ok(LoadedMesh {
        mesh,
        degenerate_faces,
    })
}

pub fn write_stl(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + mesh.faces().len() * 50);
    let mut header = [0u8; 80];
    let tag = b"resect binary STL";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.faces().len() as u32).to_le_bytes());
    for f in 0..mesh.faces().len() {
        let n = mesh.face_normal(f);
        for c in n.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        for v in mesh.triangle(f) {
            for c in v.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

#[derive(Default)]
struct Welder {
    vertices: Vec<Point3>,
    grid: HashMap<[i64; 3], Vec<u32>>,
}

impl Welder {
    fn cell(p: &Point3) -> [i64; 3] {
        [
            (p.x / WELD_TOLERANCE).floor() as i64,
            (p.y / WELD_TOLERANCE).floor() as i64,
            (p.z / WELD_TOLERANCE).floor() as i64,
        ]
    }

    fn insert(&mut self, p: Point3) -> u32 {
        let c = Self::cell(&p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &id in ids {
                            if (self.vertices[id as usize] - p).norm() <= WELD_TOLERANCE {
                                return id;
                            }
                        }
                    }
                }
            }
        }
        let id = self.vertices.len() as u32;
        self.vertices.push(p);
        self.grid.entry(c).or_default().push(id);
        id
    }
}

/// Line-oriented reader that tracks the byte offset of each line.
pub(crate) struct Lines<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Self { text, pos: 0 }
    }

    pub(crate) fn next_line(&mut self) -> Option<(usize, &'a str)> {
        if self.pos >= self.text.len() {
            return None;
        }
        let start = self.pos;
        let rest = &self.text[start..];
        let (line, advance) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.pos += advance;
        Some((start, line.trim_end_matches('\r')))
    }

    pub(crate) fn next_nonempty(&mut self) -> Option<(usize, &'a str)> {
        while let Some((off, line)) = self.next_line() {
            if !line.trim().is_empty() {
                return Some((off, line));
            }
        }
        None
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<LoadedMesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        Error::parse(e.valid_up_to(), "ASCII PLY must be valid UTF-8 text")
    })?;
    let mut lines = Lines::new(text);
    match lines.next_line() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::parse(0, "missing 'ply' magic")),
    }

    #[derive(Default)]
    struct Element {
        name: String,
        count: usize,
        properties: Vec<String>,
        list_property: Option<String>,
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some((off, line)) = lines.next_line() else {
            return Err(Error::parse(text.len(), "header has no end_header"));
        };
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(Error::parse(off, format!("unsupported PLY format '{other}'")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(off, format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    ..Default::default()
                });
            }
            ["property", "list", _, _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(off, "property before any element"))?;
                el.list_property = Some(name.to_string());
                el.properties.push(name.to_string());
            }
            ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(off, "property before any element"))?;
                el.properties.push(name.to_string());
            }
            _ => return Err(Error::parse(off, format!("unrecognised header line '{line}'"))),
        }
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let col = |axis: &str| {
                    el.properties.iter().position(|p| p == axis).ok_or_else(|| {
                        Error::parse(0, format!("vertex element lacks property '{axis}'"))
                    })
                };
                let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
                for _ in 0..el.count {
                    let (off, line) = lines
                        .next_nonempty()
                        .ok_or_else(|| Error::parse(text.len(), "file ends inside vertex list"))?;
                    let vals: Vec<f64> = line
                        .split_whitespace()
                        .map(|w| w.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::parse(off, format!("bad vertex line '{line}'")))?;
                    let get = |i: usize| {
                        vals.get(i)
                            .copied()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| Error::parse(off, format!("bad vertex line '{line}'")))
                    };
                    vertices.push(Point3::new(get(ix)?, get(iy)?, get(iz)?));
                }
            }
            "face" => {
                if el.list_property.is_none() {
                    return Err(Error::parse(0, "face element lacks a vertex index list"));
                }
                for _ in 0..el.count {
                    let (off, line) = lines
                        .next_nonempty()
                        .ok_or_else(|| Error::parse(text.len(), "file ends inside face list"))?;
                    let vals: Vec<i64> = line
                        .split_whitespace()
                        .map(|w| w.parse::<i64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::parse(off, format!("bad face line '{line}'")))?;
                    let n = *vals
                        .first()
                        .ok_or_else(|| Error::parse(off, "empty face line"))?
                        as usize;
                    if n < 3 || vals.len() < n + 1 {
                        return Err(Error::parse(off, format!("bad face line '{line}'")));
                    }
                    let idx = &vals[1..=n];
                    if let Some(bad) = idx
                        .iter()
                        .find(|&&i| i < 0 || i as usize >= vertices.len())
                    {
                        return Err(Error::parse(
                            off,
                            format!("face index {bad} out of range 0..{}", vertices.len()),
                        ));
                    }
                    // fan triangulation for polygons
                    for k in 1..n - 1 {
                        faces.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    lines
                        .next_nonempty()
                        .ok_or_else(|| Error::parse(text.len(), "file ends inside element"))?;
                }
            }
        }
    }
    let (mesh, degenerate_faces) = TriangleMesh::new_dropping_degenerate(vertices, faces)?;
    Ok(LoadedMesh {
        mesh,
        degenerate_faces,
    })
}

pub fn write_ply(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ply\nformat ascii 1.0\ncomment resect");
    let _ = writeln!(s, "element vertex {}", mesh.vertices().len());
    let _ = writeln!(s, "property double x\nproperty double y\nproperty double z");
    let _ = writeln!(s, "element face {}", mesh.faces().len());
    let _ = writeln!(s, "property list uchar int vertex_indices\nend_header");
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn format_polyline(line: &Polyline3) -> String {
    let mut s = String::new();
    if line.is_closed() {
        s.push_str("#closed\n");
    }
    for p in line.points() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

/// Parses the point-list format; returns the points and the closed flag.
pub fn parse_points(text: &str) -> Result<(Vec<Point3>, bool)> {
    let mut lines = Lines::new(text);
    let mut points = Vec::new();
    let mut closed = false;
    while let Some((off, line)) = lines.next_line() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(directive) = t.strip_prefix('#') {
            if directive.trim() == "closed" {
                closed = true;
            }
            continue;
        }
        let vals: Vec<f64> = t
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(off, format!("expected 'x y z', got '{t}'")))?;
        if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(off, format!("expected 'x y z', got '{t}'")));
        }
        points.push(Point3::new(vals[0], vals[1], vals[2]));
    }
    Ok((points, closed))
}

pub fn parse_polyline(text: &str) -> Result<Polyline3> {
    let (points, closed) = parse_points(text)?;
    Polyline3::new(points, closed)
}

pub fn load_polyline(path: impl AsRef<Path>) -> Result<Polyline3> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_polyline(&text)
}

pub fn save_polyline(path: impl AsRef<Path>, line: &Polyline3) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_polyline(line)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::ellipsoid;
    use crate::geometry::Vec3;
    use rand::{Rng, SeedableRng};

    fn cube_stl() -> Vec<u8> {
        // 12 triangles, each listing its own copy of the corners
        let c = |i: u32| {
            Point3::new(
                (i & 1) as f64,
                ((i >> 1) & 1) as f64,
                ((i >> 2) & 1) as f64,
            )
        };
        let quads = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let mut verts = Vec::new();
        let mut faces = Vec::new();
        for q in quads {
            for tri in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
                let base = verts.len() as u32;
                verts.extend(tri.iter().map(|&i| c(i)));
                faces.push([base, base + 1, base + 2]);
            }
        }
        write_stl(&TriangleMesh::new(verts, faces).unwrap())
    }

    #[test]
    fn unit_cube_welds_to_eight_vertices() {
        let loaded = parse_stl(&cube_stl()).unwrap();
        assert_eq!(loaded.mesh.vertices().len(), 8);
        assert_eq!(loaded.mesh.faces().len(), 12);
        assert_eq!(loaded.degenerate_faces, 0);
        assert!(loaded.mesh.is_closed());
        assert!((loaded.mesh.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_stl_names_offset() {
        let mut bytes = cube_stl();
        bytes.truncate(84 + 50 * 5 + 17);
        match parse_stl(&bytes) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 84 + 50 * 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_stl(&[0u8; 10]), Err(Error::Parse { .. })));
    }

    #[test]
    fn ply_out_of_range_index_is_an_error() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n";
        match parse_ply(text.as_bytes()) {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, text.find("3 0 1 7").unwrap());
                assert!(message.contains("out of range"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ply_quads_and_extra_properties() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255\n1 0 0 0\n1 1 0 0\n0 1 0 0\n4 0 1 2 3\n";
        let m = parse_ply(text.as_bytes()).unwrap().mesh;
        assert_eq!(m.faces().len(), 2);
        assert!((m.surface_area() - 1.0).abs() < 1e-12);
        assert!(parse_ply(b"ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
    }

    #[test]
    fn ply_round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let base = ellipsoid(Point3::new(1.0, 2.0, 3.0), Vec3::new(30.0, 20.0, 10.0), 2);
        let jittered: Vec<Point3> = base
            .vertices()
            .iter()
            .map(|v| v + Vec3::new(rng.random(), rng.random(), rng.random()) * 0.1)
            .collect();
        let mesh = base.with_vertices(jittered).unwrap();
        let back = parse_ply(write_ply(&mesh).as_bytes()).unwrap().mesh;
        assert_eq!(back.faces(), mesh.faces());
        for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn stl_round_trip_within_single_precision() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let base = ellipsoid(Point3::origin(), Vec3::new(8.0, 6.0, 5.0), 2);
        let jittered: Vec<Point3> = base
            .vertices()
            .iter()
            .map(|v| v + Vec3::new(rng.random(), rng.random(), rng.random()) * 0.05)
            .collect();
        let mesh = base.with_vertices(jittered).unwrap();
        let back = parse_stl(&write_stl(&mesh)).unwrap().mesh;
        assert_eq!(back.vertices().len(), mesh.vertices().len());
        // welding keeps first-seen order, so match by nearest vertex
        for v in mesh.vertices() {
            let d = back
                .vertices()
                .iter()
                .map(|w| (w - v).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1e-6, "{d}");
        }
    }

    #[test]
    fn polyline_text_round_trip() {
        let line = Polyline3::new(
            vec![
                Point3::new(0.1, 0.2, 0.3),
                Point3::new(1.0 / 3.0, 2.0, -4.5),
                Point3::new(7.0, 8.0, 9.0),
            ],
            true,
        )
        .unwrap();
        let text = format_polyline(&line);
        assert!(text.starts_with("#closed\n"));
        assert_eq!(parse_polyline(&text).unwrap(), line);
        assert!(parse_polyline("1 2\n3 4 5\n").is_err());
        let open = parse_polyline("# comment\n0 0 0\n\n1 1 1\n").unwrap();
        assert!(!open.is_closed());
    }
}
