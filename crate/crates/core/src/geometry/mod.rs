//! 3-D primitives shared by every stage: points, rigid transforms, triangle
//! meshes, polylines, distance queries and file formats. Lengths are in
//! millimetres. Model coordinates are treated as an opaque Cartesian frame.

pub mod bvh;
pub mod intersect;
pub mod io;
pub mod mesh;
pub mod polyline;
pub mod transform;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

pub use bvh::{Aabb, MeshBvh};
pub use io::{load_mesh, save_mesh, MeshFormat};
pub use mesh::{point_to_mesh_distance, TriangleMesh};
pub use polyline::{point_to_polyline_distance, Polyline3};
pub use transform::{compose, invert, transform_point, RigidTransform};
