//! Triangle–triangle intersection and chaining of the resulting segments
//! into closed curves.
//!
//! Each segment endpoint is where an edge of one mesh pierces a face of the
//! other. Endpoints are keyed by (mesh, edge, other face) and computed from
//! the edge in canonical vertex order, so neighbouring segments produce
//! bit-identical junction points and chain by key, not by distance.

use std::collections::HashMap;

use rayon::prelude::*;

use super::{Aabb, MeshBvh, Point3, Polyline3, TriangleMesh, Vec3};
use crate::error::{Error, Result};

/// Endpoints further apart than this are never joined.
pub const CHAIN_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EndpointKey {
    /// Edge `(lo, hi)` of the first mesh crossing face `face` of the second.
    EdgeOfFirst { edge: (u32, u32), face: u32 },
    /// Edge `(lo, hi)` of the second mesh crossing face `face` of the first.
    EdgeOfSecond { edge: (u32, u32), face: u32 },
}

#[derive(Clone, Copy, Debug)]
pub struct IntersectionSegment {
    pub face_a: u32,
    pub face_b: u32,
    pub ends: [(Point3, EndpointKey); 2],
}

#[derive(Clone, Debug)]
pub struct IntersectionLoop {
    pub points: Vec<Point3>,
    pub length: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ChainedCurves {
    pub loops: Vec<IntersectionLoop>,
    /// Endpoint pairs that could not be joined within [`CHAIN_TOLERANCE`].
    pub gaps: Vec<(Point3, Point3)>,
}

struct FacePlane {
    origin: Point3,
    normal: Vec3,
}

impl FacePlane {
    fn of(mesh: &TriangleMesh, face: usize) -> Self {
        let [a, b, c] = mesh.triangle(face);
        Self {
            origin: a,
            normal: (b - a).cross(&(c - a)),
        }
    }

    fn signed(&self, p: &Point3) -> f64 {
        self.normal.dot(&(p - self.origin))
    }
}

/// Points where the edges of `face` (in `mesh`) cross `plane`, with edge keys.
/// Zero distances count as positive, which keeps the choice consistent
/// between the two faces sharing an edge.
fn edge_crossings(
    mesh: &TriangleMesh,
    face: usize,
    plane: &FacePlane,
) -> Option<[(Point3, (u32, u32)); 2]> {
    let idx = mesh.faces()[face];
    let verts = mesh.vertices();
    let side: [bool; 3] = std::array::from_fn(|k| plane.signed(&verts[idx[k] as usize]) >= 0.0);
    if side[0] == side[1] && side[1] == side[2] {
        return None;
    }
    let mut out = [(Point3::origin(), (0, 0)); 2];
    let mut n = 0;
    for k in 0..3 {
        let (i, j) = (idx[k], idx[(k + 1) % 3]);
        if side[k] != side[(k + 1) % 3] {
            let (lo, hi) = (i.min(j), i.max(j));
            let p = verts[lo as usize];
            let q = verts[hi as usize];
            let dp = plane.signed(&p);
            let dq = plane.signed(&q);
            let t = dp / (dp - dq);
            out[n] = (p + (q - p) * t, (lo, hi));
            n += 1;
        }
    }
    debug_assert_eq!(n, 2);
    Some(out)
}

/// Intersection segment of face `fa` of `a` with face `fb` of `b`, if any.
pub fn triangle_pair_segment(
    a: &TriangleMesh,
    fa: usize,
    b: &TriangleMesh,
    fb: usize,
) -> Option<IntersectionSegment> {
    let plane_a = FacePlane::of(a, fa);
    let plane_b = FacePlane::of(b, fb);
    let cross_a = edge_crossings(a, fa, &plane_b)?;
    let cross_b = edge_crossings(b, fb, &plane_a)?;
    let dir = plane_a.normal.cross(&plane_b.normal);
    if dir.norm_squared() == 0.0 {
        return None;
    }
    let candidates: [(Point3, EndpointKey); 4] = [
        (
            cross_a[0].0,
            EndpointKey::EdgeOfFirst {
                edge: cross_a[0].1,
                face: fb as u32,
            },
        ),
        (
            cross_a[1].0,
            EndpointKey::EdgeOfFirst {
                edge: cross_a[1].1,
                face: fb as u32,
            },
        ),
        (
            cross_b[0].0,
            EndpointKey::EdgeOfSecond {
                edge: cross_b[0].1,
                face: fa as u32,
            },
        ),
        (
            cross_b[1].0,
            EndpointKey::EdgeOfSecond {
                edge: cross_b[1].1,
                face: fa as u32,
            },
        ),
    ];
    let t: [f64; 4] = std::array::from_fn(|k| dir.dot(&candidates[k].0.coords));
    let (a_lo, a_hi) = if t[0] <= t[1] { (0, 1) } else { (1, 0) };
    let (b_lo, b_hi) = if t[2] <= t[3] { (2, 3) } else { (3, 2) };
    let lo = if t[a_lo] >= t[b_lo] { a_lo } else { b_lo };
    let hi = if t[a_hi] <= t[b_hi] { a_hi } else { b_hi };
    if t[lo] >= t[hi] {
        return None;
    }
    Some(IntersectionSegment {
        face_a: fa as u32,
        face_b: fb as u32,
        ends: [candidates[lo], candidates[hi]],
    })
}

/// All face-pair intersection segments, ordered by (face of `a`, face of `b`).
pub fn intersection_segments(a: &TriangleMesh, b: &TriangleMesh) -> Vec<IntersectionSegment> {
    let bvh = MeshBvh::new(b);
    (0..a.faces().len())
        .into_par_iter()
        .flat_map_iter(|fa| {
            let bounds = Aabb::of_points(a.triangle(fa).iter()).inflated(1e-9);
            bvh.faces_overlapping(&bounds)
                .into_iter()
                .filter_map(move |fb| triangle_pair_segment(a, fa, b, fb))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// True if any pair of faces intersects.
pub fn meshes_intersect(a: &TriangleMesh, b: &TriangleMesh) -> bool {
    let bvh = MeshBvh::new(b);
    (0..a.faces().len()).into_par_iter().any(|fa| {
        let bounds = Aabb::of_points(a.triangle(fa).iter()).inflated(1e-9);
        bvh.faces_overlapping(&bounds)
            .into_iter()
            .any(|fb| triangle_pair_segment(a, fa, b, fb).is_some())
    })
}

/// Chains segments into closed loops, joining by endpoint key first and by
/// distance (≤ [`CHAIN_TOLERANCE`]) only for endpoints whose key has no partner.
pub fn chain_segments(segments: &[IntersectionSegment]) -> ChainedCurves {
    let mut by_key: HashMap<EndpointKey, Vec<(usize, usize)>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        for e in 0..2 {
            by_key.entry(seg.ends[e].1).or_default().push((s, e));
        }
    }
    // endpoints whose key is not shared: candidates for distance matching
    let mut orphans: Vec<(usize, usize)> = by_key
        .values()
        .filter(|v| v.len() == 1)
        .map(|v| v[0])
        .collect();
    orphans.sort_unstable();
    let mut orphan_used = vec![false; orphans.len()];

    let partner = |s: usize, e: usize, orphan_used: &mut Vec<bool>| -> Option<(usize, usize)> {
        let key = segments[s].ends[e].1;
        if let Some(list) = by_key.get(&key) {
            if let Some(&other) = list.iter().find(|&&(os, oe)| (os, oe) != (s, e)) {
                return Some(other);
            }
        }
        let p = segments[s].ends[e].0;
        let mut best: Option<(usize, f64)> = None;
        for (k, &(os, oe)) in orphans.iter().enumerate() {
            if orphan_used[k] || (os, oe) == (s, e) {
                continue;
            }
            let d = (segments[os].ends[oe].0 - p).norm();
            if d <= CHAIN_TOLERANCE && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        best.map(|(k, _)| {
            orphan_used[k] = true;
            if let Some(me) = orphans.iter().position(|&o| o == (s, e)) {
                orphan_used[me] = true;
            }
            orphans[k]
        })
    };

    let mut visited = vec![false; segments.len()];
    let mut out = ChainedCurves::default();
    for start in 0..segments.len() {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut points = vec![segments[start].ends[0].0, segments[start].ends[1].0];
        let mut current = (start, 1usize);
        let mut closed = false;
        loop {
            let Some((ns, ne)) = partner(current.0, current.1, &mut orphan_used) else {
                break;
            };
            if ns == start {
                closed = ne == 0;
                break;
            }
            if visited[ns] {
                break;
            }
            visited[ns] = true;
            let exit = 1 - ne;
            points.push(segments[ns].ends[exit].0);
            current = (ns, exit);
        }
        if closed {
            // last point duplicates the first junction
            points.pop();
            let length = points
                .iter()
                .zip(points.iter().cycle().skip(1))
                .map(|(a, b)| (b - a).norm())
                .sum();
            out.loops.push(IntersectionLoop { points, length });
        } else {
            // extend backwards from the start so the gap spans the whole chain
            let mut head = segments[start].ends[0].0;
            let mut current = (start, 0usize);
            while let Some((ns, ne)) = partner(current.0, current.1, &mut orphan_used) {
                if visited[ns] {
                    break;
                }
                visited[ns] = true;
                let exit = 1 - ne;
                head = segments[ns].ends[exit].0;
                current = (ns, exit);
            }
            out.gaps.push((*points.last().unwrap(), head));
        }
    }
    out
}

/// Largest closed intersection curve between two meshes.
pub fn largest_intersection_loop(a: &TriangleMesh, b: &TriangleMesh) -> Result<(Polyline3, usize)> {
    let segments = intersection_segments(a, b);
    if segments.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let curves = chain_segments(&segments);
    if !curves.gaps.is_empty() {
        return Err(Error::OpenChain {
            gaps: curves
                .gaps
                .iter()
                .map(|(p, q)| ([p.x, p.y, p.z], [q.x, q.y, q.z]))
                .collect(),
        });
    }
    let loop_count = curves.loops.len();
    let best = curves
        .loops
        .into_iter()
        .fold(None::<IntersectionLoop>, |acc, l| match acc {
            Some(b) if b.length >= l.length => Some(b),
            _ => Some(l),
        })
        .ok_or(Error::EmptyIntersection)?;
    Ok((Polyline3::new_dedup(best.points, true)?, loop_count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::{ellipsoid, flat_grid};

    #[test]
    fn sphere_plane_circle() {
        let plane = flat_grid(60.0, 40, 0.0);
        let sphere = ellipsoid(Point3::new(0.0, 0.0, -15.0), Vec3::repeat(20.0), 4);
        let (curve, loops) = largest_intersection_loop(&plane, &sphere).unwrap();
        assert_eq!(loops, 1);
        let r = (20f64.powi(2) - 15f64.powi(2)).sqrt();
        for p in curve.points() {
            assert!(p.z.abs() < 1e-9);
            assert!(((p.x.powi(2) + p.y.powi(2)).sqrt() - r).abs() < 0.1);
        }
    }

    #[test]
    fn disjoint_meshes_report_empty_intersection() {
        let a = ellipsoid(Point3::origin(), Vec3::repeat(5.0), 2);
        let b = ellipsoid(Point3::new(50.0, 0.0, 0.0), Vec3::repeat(5.0), 2);
        assert!(matches!(
            largest_intersection_loop(&a, &b),
            Err(Error::EmptyIntersection)
        ));
        assert!(!meshes_intersect(&a, &b));
    }

    #[test]
    fn overlapping_spheres_intersect_in_one_loop() {
        let a = ellipsoid(Point3::origin(), Vec3::repeat(10.0), 3);
        let b = ellipsoid(Point3::new(7.0, 1.0, 0.5), Vec3::repeat(9.0), 3);
        assert!(meshes_intersect(&a, &b));
        let segs = intersection_segments(&a, &b);
        let curves = chain_segments(&segs);
        assert!(curves.gaps.is_empty());
        assert_eq!(curves.loops.len(), 1);
        assert_eq!(curves.loops[0].points.len(), segs.len());
    }

    #[test]
    fn open_surfaces_report_gap() {
        // the cross-section circle (r ≈ 4.58) leaves the square through its sides
        let strip = flat_grid(4.0, 8, 0.0);
        let sphere = ellipsoid(Point3::new(0.0, 0.0, -2.0), Vec3::repeat(5.0), 3);
        match largest_intersection_loop(&strip, &sphere) {
            Err(Error::OpenChain { gaps }) => assert_eq!(gaps.len(), 4),
            other => panic!("{other:?}"),
        }
        // a square fully inside the cross-section never meets the sphere
        let strip = flat_grid(3.0, 6, 0.0);
        assert!(matches!(
            largest_intersection_loop(&strip, &sphere),
            Err(Error::EmptyIntersection)
        ));
    }
}
