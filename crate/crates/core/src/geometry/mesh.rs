use std::collections::HashMap;

use super::{Point3, RigidTransform, Vec3};
use crate::error::{Error, Result};

/// Faces with area at or below this (mm²) are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Validates indices, coordinate finiteness and face areas.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if let Some(i) = vertices
            .iter()
            .position(|v| v.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        let n = vertices.len() as u32;
        if let Some(i) = faces.iter().position(|f| f.iter().any(|&ix| ix >= n)) {
            return Err(Error::InvalidMesh(format!(
                "face {i} references a vertex outside 0..{n}"
            )));
        }
        let mesh = Self { vertices, faces };
        let degenerate = (0..mesh.faces.len())
            .filter(|&f| mesh.face_area(f) <= DEGENERATE_AREA)
            .count();
        if degenerate > 0 {
            return Err(Error::DegenerateFaces { count: degenerate });
        }
        Ok(mesh)
    }

    /// Like [`TriangleMesh::new`] but drops zero-area faces instead of failing.
    /// Returns the mesh and the number of faces removed.
    pub fn new_dropping_degenerate(
        vertices: Vec<Point3>,
        faces: Vec<[u32; 3]>,
    ) -> Result<(Self, usize)> {
        let n = vertices.len() as u32;
        if let Some(i) = faces.iter().position(|f| f.iter().any(|&ix| ix >= n)) {
            return Err(Error::InvalidMesh(format!(
                "face {i} references a vertex outside 0..{n}"
            )));
        }
        let before = faces.len();
        let kept: Vec<[u32; 3]> = faces
            .into_iter()
            .filter(|f| triangle_area(&vertices, f) > DEGENERATE_AREA)
            .collect();
        let dropped = before - kept.len();
        Ok((Self::new(vertices, kept)?, dropped))
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Point3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        triangle_area(&self.vertices, &self.faces[face])
    }

    /// Unit normal following the face winding (right-hand rule).
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a)).normalize()
    }

    /// Angle-weighted vertex normals. Vertices not referenced by any face get a zero vector.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![Vec3::zeros(); self.vertices.len()];
        for (f, face) in self.faces.iter().enumerate() {
            let n = self.face_normal(f);
            let tri = self.triangle(f);
            for k in 0..3 {
                let p = tri[k];
                let e1 = (tri[(k + 1) % 3] - p).normalize();
                let e2 = (tri[(k + 2) % 3] - p).normalize();
                let angle = e1.dot(&e2).clamp(-1.0, 1.0).acos();
                normals[face[k] as usize] += n * angle;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    /// True when every undirected edge is shared by exactly two faces.
    pub fn is_closed(&self) -> bool {
        self.boundary_edge_count() == 0 && !self.faces.is_empty()
    }

    pub fn boundary_edge_count(&self) -> usize {
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts.values().filter(|&&c| c != 2).count()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume (positive for outward-wound closed meshes).
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    /// Volume centroid for closed meshes, area-weighted surface centroid otherwise.
    pub fn centroid(&self) -> Point3 {
        if self.is_closed() {
            let mut acc = Vec3::zeros();
            let mut vol = 0.0;
            for f in 0..self.faces.len() {
                let [a, b, c] = self.triangle(f);
                let v = a.coords.dot(&b.coords.cross(&c.coords)) / 6.0;
                acc += (a.coords + b.coords + c.coords) * (v / 4.0);
                vol += v;
            }
            if vol.abs() > 1e-12 {
                return Point3::from(acc / vol);
            }
        }
        let mut acc = Vec3::zeros();
        let mut area = 0.0;
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let w = self.face_area(f);
            acc += (a.coords + b.coords + c.coords) * (w / 3.0);
            area += w;
        }
        Point3::from(acc / area)
    }

    pub fn bounds(&self) -> (Point3, Point3) {
        let mut lo = Point3::from(Vec3::repeat(f64::INFINITY));
        let mut hi = Point3::from(Vec3::repeat(f64::NEG_INFINITY));
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| t.transform_point(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Replaces vertex positions, keeping connectivity. Fails if any face becomes degenerate.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<TriangleMesh> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidMesh("vertex count changed".into()));
        }
        TriangleMesh::new(vertices, self.faces.clone())
    }

    /// Brute-force closest point over all faces. Ties go to the lowest face index.
    pub fn closest_point(&self, p: &Point3) -> Result<(Point3, usize, f64)> {
        if self.faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let mut best = (Point3::origin(), 0usize, f64::INFINITY);
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let q = closest_point_on_triangle(p, &a, &b, &c);
            let d2 = (q - p).norm_squared();
            if d2 < best.2 {
                best = (q, f, d2);
            }
        }
        Ok((best.0, best.1, best.2.sqrt()))
    }
}

fn triangle_area(vertices: &[Point3], f: &[u32; 3]) -> f64 {
    let a = vertices[f[0] as usize];
    let b = vertices[f[1] as usize];
    let c = vertices[f[2] as usize];
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Minimum distance from `p` to the surface of `m`.
pub fn point_to_mesh_distance(p: &Point3, m: &TriangleMesh) -> Result<f64> {
    m.closest_point(p).map(|(_, _, d)| d)
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Icosahedron subdivided `levels` times and projected onto the unit sphere.
/// Faces are wound counter-clockwise seen from outside.
pub fn icosphere(levels: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(Vec3::new(x, y, z).normalize()))
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Point3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize].coords + vertices[b as usize].coords).normalize();
                vertices.push(Point3::from(m));
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh { vertices, faces }
}

/// Axis-aligned ellipsoid (icosphere scaled per axis) centred at `center`.
pub fn ellipsoid(center: Point3, radii: Vec3, levels: u32) -> TriangleMesh {
    let unit = icosphere(levels);
    let vertices = unit
        .vertices
        .iter()
        .map(|v| center + v.coords.component_mul(&radii))
        .collect();
    TriangleMesh {
        vertices,
        faces: unit.faces,
    }
}

/// Flat square grid in the plane `z = height`, normals pointing +z.
pub fn flat_grid(half_extent: f64, divisions: usize, height: f64) -> TriangleMesh {
    let n = divisions + 1;
    let step = 2.0 * half_extent / divisions as f64;
    let mut vertices = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vertices.push(Point3::new(
                -half_extent + i as f64 * step,
                -half_extent + j as f64 * step,
                height,
            ));
        }
    }
    let mut faces = Vec::with_capacity(divisions * divisions * 2);
    for j in 0..divisions {
        for i in 0..divisions {
            let a = (j * n + i) as u32;
            let b = a + 1;
            let c = a + n as u32;
            let d = c + 1;
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    TriangleMesh { vertices, faces }
}
