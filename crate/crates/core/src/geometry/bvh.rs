//! Bounding-volume hierarchy over mesh faces for nearest-point and overlap queries.

use super::mesh::closest_point_on_triangle;
use super::{Point3, TriangleMesh, Vec3};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::from(Vec3::repeat(f64::INFINITY)),
            max: Point3::from(Vec3::repeat(f64::NEG_INFINITY)),
        }
    }

    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn inflated(&self, by: f64) -> Aabb {
        Aabb {
            min: self.min - Vec3::repeat(by),
            max: self.max + Vec3::repeat(by),
        }
    }

    pub fn distance_squared(&self, p: &Point3) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = p[k];
            let excess = if v < self.min[k] {
                self.min[k] - v
            } else if v > self.max[k] {
                v - self.max[k]
            } else {
                0.0
            };
            d2 += excess * excess;
        }
        d2
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && other.min[k] <= self.max[k])
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Face hierarchy borrowed from a mesh. Queries are exact; the tree only prunes.
#[derive(Clone, Debug)]
pub struct MeshBvh<'m> {
    mesh: &'m TriangleMesh,
    nodes: Vec<Node>,
    order: Vec<usize>,
    face_bounds: Vec<Aabb>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nearest {
    pub point: Point3,
    pub face: usize,
    pub distance: f64,
}

impl<'m> MeshBvh<'m> {
    pub fn new(mesh: &'m TriangleMesh) -> Self {
        let face_bounds: Vec<Aabb> = (0..mesh.faces().len())
            .map(|f| Aabb::of_points(mesh.triangle(f).iter()))
            .collect();
        let centroids: Vec<Point3> = (0..mesh.faces().len())
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                Point3::from((a.coords + b.coords + c.coords) / 3.0)
            })
            .collect();
        let mut order: Vec<usize> = (0..mesh.faces().len()).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            let len = order.len();
            build(&mut nodes, &mut order, 0, len, &face_bounds, &centroids);
        }
        Self {
            mesh,
            nodes,
            order,
            face_bounds,
        }
    }

    pub fn mesh(&self) -> &'m TriangleMesh {
        self.mesh
    }

    /// Exact closest point on the mesh; ties resolve to the lowest face index.
    pub fn nearest(&self, p: &Point3) -> Result<Nearest> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let mut best_d2 = f64::INFINITY;
        let mut best_face = usize::MAX;
        let mut best_point = Point3::origin();
        let mut stack = vec![0usize];
        while let Some(ix) = stack.pop() {
            let node = &self.nodes[ix];
            if node.bounds().distance_squared(p) > best_d2 {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &f in &self.order[start..end] {
                        let [a, b, c] = self.mesh.triangle(f);
                        let q = closest_point_on_triangle(p, &a, &b, &c);
                        let d2 = (q - p).norm_squared();
                        if d2 < best_d2 || (d2 == best_d2 && f < best_face) {
                            best_d2 = d2;
                            best_face = f;
                            best_point = q;
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().distance_squared(p);
                    let dr = self.nodes[right].bounds().distance_squared(p);
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        Ok(Nearest {
            point: best_point,
            face: best_face,
            distance: best_d2.sqrt(),
        })
    }

    pub fn distance(&self, p: &Point3) -> Result<f64> {
        self.nearest(p).map(|n| n.distance)
    }

    /// Faces whose bounding boxes overlap `query`, in ascending face order.
    pub fn faces_overlapping(&self, query: &Aabb) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(ix) = stack.pop() {
            let node = &self.nodes[ix];
            if !node.bounds().overlaps(query) {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&f| self.face_bounds[f].overlaps(query)),
                ),
                Node::Inner { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn face_bounds(&self, face: usize) -> &Aabb {
        &self.face_bounds[face]
    }
}

fn build(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    end: usize,
    face_bounds: &[Aabb],
    centroids: &[Point3],
) -> usize {
    let bounds = order[start..end]
        .iter()
        .fold(Aabb::empty(), |acc, &f| acc.merge(&face_bounds[f]));
    let ix = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return ix;
    }
    let cb = Aabb::of_points(order[start..end].iter().map(|&f| &centroids[f]));
    let extent = cb.max - cb.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node::Leaf {
        bounds,
        start: 0,
        end: 0,
    });
    let left = build(nodes, order, start, mid, face_bounds, centroids);
    let right = build(nodes, order, mid, end, face_bounds, centroids);
    nodes[ix] = Node::Inner {
        bounds,
        left,
        right,
    };
    ix
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::ellipsoid;
    use rand::{Rng, SeedableRng};

    #[test]
    fn nearest_agrees_with_brute_force() {
        let mesh = ellipsoid(Point3::new(3.0, -2.0, 1.0), Vec3::new(20.0, 10.0, 8.0), 3);
        let bvh = MeshBvh::new(&mesh);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let p = Point3::new(
                rng.random_range(-40.0..40.0),
                rng.random_range(-40.0..40.0),
                rng.random_range(-40.0..40.0),
            );
            let fast = bvh.nearest(&p).unwrap();
            let (_, face, d) = mesh.closest_point(&p).unwrap();
            assert!((fast.distance - d).abs() < 1e-12);
            assert_eq!(fast.face, face);
        }
    }

    #[test]
    fn overlap_query_matches_scan() {
        let mesh = ellipsoid(Point3::origin(), Vec3::repeat(10.0), 2);
        let bvh = MeshBvh::new(&mesh);
        let q = Aabb {
            min: Point3::new(0.0, 0.0, 0.0),
            max: Point3::new(12.0, 3.0, 3.0),
        };
        let expected: Vec<usize> = (0..mesh.faces().len())
            .filter(|&f| bvh.face_bounds(f).overlaps(&q))
            .collect();
        assert_eq!(bvh.faces_overlapping(&q), expected);
        assert!(!expected.is_empty());
    }
}
