//! Bundled phantom-scale demo scene.
//!
//! The liver is a superellipsoid `|x/100|⁴ + |y/70|⁴ + |z/40|⁴ = 1` (mm),
//! a slab with a nearly flat superior surface. The tumor is an ellipsoid whose
//! equator sits at capsule level; the capsule above it is raised into a
//! smooth bump so the tumor stays covered, as a palpable nodule would be.

use super::{ResectionPlan, DEFAULT_MARGIN_MM};
use crate::error::Result;
use crate::geometry::mesh::{ellipsoid, icosphere};
use crate::geometry::{Point3, RigidTransform, TriangleMesh, Vec3};
use crate::registration::FiducialSet;

pub const LIVER_SEMI_AXES: [f64; 3] = [100.0, 70.0, 40.0];
pub const LIVER_EXPONENT: f64 = 4.0;
pub const TUMOR_RADII: [f64; 3] = [20.0, 10.0, 9.0];
/// Tumor centre in the capsule plane; z follows from the liver surface.
pub const TUMOR_XY: [f64; 2] = [25.0, 10.0];
/// Capsule tissue above the tumor apex (mm).
pub const BUMP_COVER: f64 = 2.0;
/// Bump footprint relative to the tumor footprint.
pub const BUMP_REACH: f64 = 1.4;
pub const LIVER_LEVELS: u32 = 5;
pub const TUMOR_LEVELS: u32 = 3;

pub const FIDUCIAL_LABELS: [&str; 3] = ["left-lobe-tip", "right-superior-edge", "gallbladder-fossa"];
const FIDUCIAL_DIRECTIONS: [[f64; 3]; 3] = [[-1.0, 0.0, 0.05], [0.7, 0.55, 0.6], [0.2, -0.6, -0.6]];

/// Distance from the origin to the liver surface along unit direction `d`.
pub fn liver_radius(d: &Vec3) -> f64 {
    let s: f64 = (0..3)
        .map(|k| (d[k] / LIVER_SEMI_AXES[k]).abs().powf(LIVER_EXPONENT))
        .sum();
    s.powf(-1.0 / LIVER_EXPONENT)
}

/// Height of the unbumped superior surface above `(x, y)`.
pub fn capsule_height(x: f64, y: f64) -> f64 {
    let [a, b, c] = LIVER_SEMI_AXES;
    let rest = 1.0 - (x / a).powi(4) - (y / b).powi(4);
    c * rest.max(0.0).powf(0.25)
}

pub fn tumor_center() -> Point3 {
    Point3::new(TUMOR_XY[0], TUMOR_XY[1], capsule_height(TUMOR_XY[0], TUMOR_XY[1]))
}

fn bump(x: f64, y: f64) -> f64 {
    let rho2 = ((x - TUMOR_XY[0]) / TUMOR_RADII[0]).powi(2) + ((y - TUMOR_XY[1]) / TUMOR_RADII[1]).powi(2);
    let f = 1.0 - rho2 / (BUMP_REACH * BUMP_REACH);
    if f <= 0.0 {
        0.0
    } else {
        (TUMOR_RADII[2] + BUMP_COVER) * f.powf(1.5)
    }
}

pub fn demo_liver() -> TriangleMesh {
    let unit = icosphere(LIVER_LEVELS);
    let vertices = unit
        .vertices()
        .iter()
        .map(|v| {
            let mut p = Point3::from(v.coords * liver_radius(&v.coords));
            if p.z > 0.0 {
                p.z += bump(p.x, p.y);
            }
            p
        })
        .collect();
    unit.with_vertices(vertices).expect("radial projection keeps faces non-degenerate")
}

pub fn demo_tumor() -> TriangleMesh {
    ellipsoid(tumor_center(), Vec3::from(TUMOR_RADII), TUMOR_LEVELS)
}

/// Fiducial landmarks on the liver surface, model side only.
pub fn demo_fiducials() -> FiducialSet {
    let points = FIDUCIAL_DIRECTIONS
        .iter()
        .map(|d| {
            let d = Vec3::from(*d).normalize();
            Point3::from(d * liver_radius(&d))
        })
        .collect();
    FiducialSet::model_only(FIDUCIAL_LABELS.iter().map(|s| s.to_string()).collect(), points)
        .expect("demo fiducials are well spread")
}

/// Pose of the phantom on the table.
pub fn demo_world_pose() -> RigidTransform {
    RigidTransform::from_axis_angle(
        Vec3::new(0.1, 0.2, 1.0),
        30f64.to_radians(),
        Vec3::new(350.0, 120.0, 90.0),
    )
}

pub fn demo_plan() -> Result<ResectionPlan> {
    Ok(ResectionPlan::build(demo_liver(), demo_tumor(), DEFAULT_MARGIN_MM)?.plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MeshBvh;
    use crate::planning::validate_plan;

    #[test]
    fn liver_is_closed_and_contains_the_tumor() {
        let liver = demo_liver();
        assert!(liver.is_closed());
        assert!(liver.signed_volume() > 0.0);
        let tumor = demo_tumor();
        let bvh = MeshBvh::new(&liver);
        for v in tumor.vertices() {
            let near = bvh.nearest(v).unwrap();
            let outward = liver.face_normal(near.face);
            assert!((v - near.point).dot(&outward) < 0.0, "tumor vertex {v} outside liver");
        }
    }

    #[test]
    fn fiducials_lie_on_the_surface() {
        for p in demo_fiducials().model_points() {
            let d = p.coords.normalize();
            assert!((p.coords.norm() - liver_radius(&d)).abs() < 1e-9);
        }
    }

    #[test]
    fn demo_plan_matches_golden_extents() {
        let plan = demo_plan().unwrap();
        let report = validate_plan(&plan, plan.liver());
        assert!(report.all_passed(), "{report}");
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in plan.path().points() {
            lo = lo.inf(&p.coords);
            hi = hi.sup(&p.coords);
        }
        let extent = hi - lo;
        assert!((extent.x - 60.0).abs() < 3.0, "x extent {}", extent.x);
        assert!((extent.y - 40.0).abs() < 3.0, "y extent {}", extent.y);
        assert!((plan.perimeter() - 160.0).abs() < 8.0, "perimeter {}", plan.perimeter());
    }
}
