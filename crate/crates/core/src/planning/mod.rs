//! Resection planning: a margin offset around the tumor and its closed
//! intersection curve with the liver capsule.

pub mod demo;
pub mod manifest;

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::intersect::largest_intersection_loop;
use crate::geometry::{MeshBvh, Point3, Polyline3, TriangleMesh, Vec3};

pub const DEFAULT_MARGIN_MM: f64 = 10.0;
/// Allowed gap between path points and the liver surface (mm).
pub const SURFACE_TOLERANCE: f64 = 0.5;
/// Allowed deviation of the offset surface from the requested margin (mm).
pub const OFFSET_TOLERANCE: f64 = 1.0;
pub const MIN_PATH_POINTS: usize = 16;

#[derive(Clone, Debug)]
pub struct OffsetSurface {
    pub mesh: TriangleMesh,
    /// Vertices closer to the source than `margin - OFFSET_TOLERANCE`.
    pub violations: Vec<usize>,
}

/// Moves every vertex `margin` along its angle-weighted normal.
pub fn offset_surface(tumor: &TriangleMesh, margin: f64) -> Result<OffsetSurface> {
    if !(margin > 0.0) || !margin.is_finite() {
        return Err(Error::InvalidArgument(format!("margin must be positive, got {margin}")));
    }
    if !tumor.is_closed() {
        return Err(Error::InvalidMesh(format!(
            "tumor mesh is not closed ({} boundary edge(s))",
            tumor.boundary_edge_count()
        )));
    }
    let normals = tumor.vertex_normals();
    let vertices: Vec<Point3> = tumor
        .vertices()
        .iter()
        .zip(&normals)
        .map(|(v, n)| v + n * margin)
        .collect();
    let mesh = tumor.with_vertices(vertices)?;
    let bvh = MeshBvh::new(tumor);
    let violations = mesh
        .vertices()
        .iter()
        .enumerate()
        .filter(|(_, v)| bvh.distance(v).map_or(true, |d| d < margin - OFFSET_TOLERANCE))
        .map(|(i, _)| i)
        .collect();
    Ok(OffsetSurface { mesh, violations })
}

/// Interpolated vertex normal at the point of `liver` nearest to `p`.
pub(crate) fn surface_normal(bvh: &MeshBvh<'_>, vertex_normals: &[Vec3], p: &Point3) -> Result<Vec3> {
    let near = bvh.nearest(p)?;
    let mesh = bvh.mesh();
    let [a, b, c] = mesh.triangle(near.face);
    let idx = mesh.faces()[near.face];
    let (v0, v1, v2) = (b - a, c - a, near.point - a);
    let (d00, d01, d11) = (v0.dot(&v0), v0.dot(&v1), v1.dot(&v1));
    let (d20, d21) = (v2.dot(&v0), v2.dot(&v1));
    let denom = d00 * d11 - d01 * d01;
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    let u = 1.0 - v - w;
    let n = vertex_normals[idx[0] as usize] * u
        + vertex_normals[idx[1] as usize] * v
        + vertex_normals[idx[2] as usize] * w;
    let len = n.norm();
    Ok(if len > 1e-12 {
        n / len
    } else {
        mesh.face_normal(near.face)
    })
}

fn path_normals(liver: &TriangleMesh, path: &Polyline3) -> Result<Vec<Vec3>> {
    let bvh = MeshBvh::new(liver);
    let vn = liver.vertex_normals();
    path.points().iter().map(|p| surface_normal(&bvh, &vn, p)).collect()
}

#[derive(Clone, Debug)]
pub struct IntersectionCurve {
    pub path: Polyline3,
    pub normals: Vec<Vec3>,
    pub loop_count: usize,
}

/// Largest closed curve where `cutting` meets `liver`, wound counter-clockwise
/// when viewed against the mean outward liver normal along it.
pub fn surface_intersection_curve(liver: &TriangleMesh, cutting: &TriangleMesh) -> Result<IntersectionCurve> {
    let (mut path, loop_count) = largest_intersection_loop(liver, cutting)?;
    let mut normals = path_normals(liver, &path)?;
    let mean: Vec3 = normals.iter().sum();
    if path.area_vector().dot(&mean) < 0.0 {
        path = path.reversed();
        normals[1..].reverse();
    }
    Ok(IntersectionCurve {
        path,
        normals,
        loop_count,
    })
}

#[derive(Clone, Debug)]
pub struct ResectionPlan {
    path: Polyline3,
    path_normals: Vec<Vec3>,
    cutting_surface: TriangleMesh,
    tumor: TriangleMesh,
    liver: TriangleMesh,
    target_margin: f64,
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub plan: ResectionPlan,
    pub offset_violations: usize,
    pub loop_count: usize,
}

impl ResectionPlan {
    /// Offsets the tumor by `margin` and intersects the result with the liver.
    pub fn build(liver: TriangleMesh, tumor: TriangleMesh, margin: f64) -> Result<PlanOutcome> {
        let offset = offset_surface(&tumor, margin)?;
        let curve = surface_intersection_curve(&liver, &offset.mesh)?;
        Ok(PlanOutcome {
            plan: ResectionPlan {
                path: curve.path,
                path_normals: curve.normals,
                cutting_surface: offset.mesh,
                tumor,
                liver,
                target_margin: margin,
            },
            offset_violations: offset.violations.len(),
            loop_count: curve.loop_count,
        })
    }

    /// Assembles a plan from stored parts; path normals are recomputed from the liver.
    pub fn from_parts(
        liver: TriangleMesh,
        tumor: TriangleMesh,
        cutting_surface: TriangleMesh,
        path: Polyline3,
        target_margin: f64,
    ) -> Result<Self> {
        if liver.is_empty() || tumor.is_empty() {
            return Err(Error::EmptyMesh);
        }
        if !(target_margin > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "margin must be positive, got {target_margin}"
            )));
        }
        let path_normals = path_normals(&liver, &path)?;
        Ok(Self {
            path,
            path_normals,
            cutting_surface,
            tumor,
            liver,
            target_margin,
        })
    }

    pub fn path(&self) -> &Polyline3 {
        &self.path
    }

    /// Unit outward liver normal at each path point.
    pub fn path_normals(&self) -> &[Vec3] {
        &self.path_normals
    }

    pub fn cutting_surface(&self) -> &TriangleMesh {
        &self.cutting_surface
    }

    pub fn tumor(&self) -> &TriangleMesh {
        &self.tumor
    }

    pub fn liver(&self) -> &TriangleMesh {
        &self.liver
    }

    pub fn target_margin(&self) -> f64 {
        self.target_margin
    }

    pub fn perimeter(&self) -> f64 {
        self.path.length()
    }

    /// Mean outward normal over the path, normalised.
    pub fn mean_normal(&self) -> Vec3 {
        self.path_normals.iter().sum::<Vec3>().normalize()
    }

    pub fn with_path(&self, path: Polyline3) -> Result<Self> {
        Self::from_parts(
            self.liver.clone(),
            self.tumor.clone(),
            self.cutting_surface.clone(),
            path,
            self.target_margin,
        )
    }

    pub fn with_tumor(&self, tumor: TriangleMesh) -> Self {
        Self {
            tumor,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<PlanCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&PlanCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PlanCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

fn first_and_count(bad: &[(usize, f64)]) -> String {
    let (i, d) = bad[0];
    format!("{} point(s) fail, first is index {i} at {d:.3} mm", bad.len())
}

/// Checks closure, surface contact, margin clearance and tumor containment.
pub fn validate_plan(plan: &ResectionPlan, liver: &TriangleMesh) -> ValidationReport {
    let path = plan.path();
    let mut checks = Vec::new();

    let closed = path.is_closed() && path.len() >= MIN_PATH_POINTS;
    checks.push(PlanCheck {
        name: "closure",
        passed: closed,
        detail: format!(
            "{} loop with {} points (minimum {MIN_PATH_POINTS})",
            if path.is_closed() { "closed" } else { "open" },
            path.len()
        ),
    });

    let liver_bvh = MeshBvh::new(liver);
    let off_surface: Vec<(usize, f64)> = path
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| (i, liver_bvh.distance(p).unwrap_or(f64::INFINITY)))
        .filter(|&(_, d)| d > SURFACE_TOLERANCE)
        .collect();
    checks.push(PlanCheck {
        name: "on_surface",
        passed: off_surface.is_empty(),
        detail: if off_surface.is_empty() {
            format!("all points within {SURFACE_TOLERANCE} mm of the liver")
        } else {
            first_and_count(&off_surface)
        },
    });

    let tumor_bvh = MeshBvh::new(plan.tumor());
    let clearances: Vec<f64> = path
        .points()
        .iter()
        .map(|p| tumor_bvh.distance(p).unwrap_or(0.0))
        .collect();
    let floor = plan.target_margin() - OFFSET_TOLERANCE;
    let tight: Vec<(usize, f64)> = clearances
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, d)| d < floor)
        .collect();
    let min_clear = clearances.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(PlanCheck {
        name: "margin_clearance",
        passed: tight.is_empty(),
        detail: if tight.is_empty() {
            format!("minimum clearance {min_clear:.3} mm (floor {floor:.3} mm)")
        } else {
            first_and_count(&tight)
        },
    });

    let inside = tumor_inside_loop(path, &plan.tumor().centroid());
    checks.push(PlanCheck {
        name: "tumor_containment",
        passed: inside,
        detail: if inside {
            "tumor centroid projects inside the loop".into()
        } else {
            "tumor centroid projects outside the loop".into()
        },
    });

    ValidationReport { checks }
}

fn tumor_inside_loop(path: &Polyline3, target: &Point3) -> bool {
    let n = path.area_vector();
    if n.norm() < 1e-12 || !path.is_closed() {
        return false;
    }
    let n = n.normalize();
    let u = n.cross(&if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() }).normalize();
    let v = n.cross(&u);
    let flat = |p: &Point3| (p.coords.dot(&u), p.coords.dot(&v));
    let (tx, ty) = flat(target);
    let pts: Vec<(f64, f64)> = path.points().iter().map(flat).collect();
    let mut winding = 0i32;
    for i in 0..pts.len() {
        let (ax, ay) = pts[i];
        let (bx, by) = pts[(i + 1) % pts.len()];
        let cross = (bx - ax) * (ty - ay) - (by - ay) * (tx - ax);
        if ay <= ty && by > ty && cross > 0.0 {
            winding += 1;
        } else if ay > ty && by <= ty && cross < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::{ellipsoid, flat_grid};
    use crate::geometry::{point_to_mesh_distance, RigidTransform};

    #[test]
    fn sphere_offset_is_a_larger_sphere() {
        let sphere = ellipsoid(Point3::new(1.0, 2.0, 3.0), Vec3::repeat(10.0), 4);
        let out = offset_surface(&sphere, 10.0).unwrap();
        for v in out.mesh.vertices() {
            assert!(((v - Point3::new(1.0, 2.0, 3.0)).norm() - 20.0).abs() < 0.1);
        }
        assert!(out.violations.is_empty());
    }

    #[test]
    fn tiny_margin_keeps_vertices() {
        let sphere = ellipsoid(Point3::origin(), Vec3::repeat(10.0), 2);
        let out = offset_surface(&sphere, 1e-10).unwrap();
        for (a, b) in out.mesh.vertices().iter().zip(sphere.vertices()) {
            assert!((a - b).norm() < 1e-9);
        }
        assert!(offset_surface(&sphere, 0.0).is_err());
    }

    #[test]
    fn ellipsoid_offset_within_contract() {
        let tumor = ellipsoid(Point3::origin(), Vec3::new(10.0, 8.0, 6.0), 3);
        let out = offset_surface(&tumor, 10.0).unwrap();
        for v in out.mesh.vertices() {
            let d = point_to_mesh_distance(v, &tumor).unwrap();
            assert!((9.0..=11.0).contains(&d), "{d}");
        }
    }

    #[test]
    fn open_tumor_is_rejected() {
        let sheet = flat_grid(10.0, 4, 0.0);
        assert!(matches!(offset_surface(&sheet, 5.0), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn plane_curve_is_counter_clockwise_about_up() {
        let plane = flat_grid(60.0, 40, 0.0);
        let sphere = ellipsoid(Point3::new(0.0, 0.0, -15.0), Vec3::repeat(20.0), 4);
        let curve = surface_intersection_curve(&plane, &sphere).unwrap();
        assert!(curve.path.area_vector().z > 0.0);
        for n in &curve.normals {
            assert!((n - Vec3::z()).norm() < 1e-9);
        }
    }

    fn toy_plan() -> ResectionPlan {
        let liver = flat_grid(60.0, 60, 0.0);
        let tumor = ellipsoid(Point3::new(0.0, 0.0, -2.0), Vec3::new(12.0, 8.0, 6.0), 3);
        ResectionPlan::build(liver, tumor, 10.0).unwrap().plan
    }

    #[test]
    fn pipeline_plan_validates() {
        let plan = toy_plan();
        let report = validate_plan(&plan, plan.liver());
        assert!(report.all_passed(), "{report}");
    }

    #[test]
    fn displaced_point_fails_on_surface_check() {
        let plan = toy_plan();
        let mut pts = plan.path().points().to_vec();
        pts[7] += Vec3::z() * 5.0;
        let moved = plan.with_path(Polyline3::new(pts, true).unwrap()).unwrap();
        let report = validate_plan(&moved, moved.liver());
        let c = report.check("on_surface").unwrap();
        assert!(!c.passed);
        assert!(c.detail.contains("index 7"), "{}", c.detail);
    }

    #[test]
    fn inflated_tumor_fails_margin_check() {
        let plan = toy_plan();
        let inflated = offset_surface(plan.tumor(), 5.0).unwrap().mesh;
        let report = validate_plan(&plan.with_tumor(inflated), plan.liver());
        assert!(!report.check("margin_clearance").unwrap().passed);
        assert!(report.check("on_surface").unwrap().passed);
    }

    #[test]
    fn plan_path_is_equivariant() {
        let liver = flat_grid(60.0, 30, 0.0);
        let tumor = ellipsoid(Point3::new(0.0, 0.0, -2.0), Vec3::new(12.0, 8.0, 6.0), 2);
        let base = ResectionPlan::build(liver.clone(), tumor.clone(), 10.0).unwrap().plan;
        let g = RigidTransform::from_axis_angle(Vec3::new(0.3, -0.5, 0.8), 1.1, Vec3::new(40.0, -7.0, 3.0));
        let moved = ResectionPlan::build(liver.transformed(&g), tumor.transformed(&g), 10.0)
            .unwrap()
            .plan;
        let back = moved.path().transformed(&g.inverse());
        assert_eq!(back.len(), base.path().len());
        for (a, b) in back.points().iter().zip(base.path().points()) {
            assert!((a - b).norm() < 1e-9, "{}", (a - b).norm());
        }
    }
}
